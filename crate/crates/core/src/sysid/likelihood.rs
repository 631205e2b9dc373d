use std::f64::consts::PI;

use nalgebra::SVector;

use super::Dataset;
use crate::dynamics::{levels_to_mass, steady_state, Disturbance};
use crate::error::Result;
use crate::estimation::{
    measurement_update, time_update, AugmentedModel, GaussianBelief, InitialCovariance, Innovation,
    AUG, TIME_UPDATE_STEPS,
};
use crate::params::ModelParams;

/// Where the filter mean starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialMean {
    /// Steady state of the first input under the candidate parameters.
    #[default]
    SteadyState,
    /// Masses implied by the first measurement.
    FirstMeasurement,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilterSetup {
    pub p0: InitialCovariance,
    pub mean: InitialMean,
}

/// Value of the negative log-likelihood. `diverged_at` is set, and `value` is
/// infinite, when the filter failed before the end of the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Likelihood {
    pub value: f64,
    pub samples: usize,
    pub diverged_at: Option<usize>,
}

impl Likelihood {
    pub fn is_finite(&self) -> bool {
        self.diverged_at.is_none() && self.value.is_finite()
    }
}

/// `½ Σ (ln det R_e + eᵀ R_e⁻¹ e) + (N n_y / 2) ln 2π` over a sequence of
/// innovations.
pub fn gaussian_nll<const N: usize, const M: usize>(innovations: &[Innovation<N, M>]) -> f64 {
    let sum: f64 = innovations
        .iter()
        .map(|i| i.log_det_re + i.mahalanobis)
        .sum();
    0.5 * sum + 0.5 * (innovations.len() * M) as f64 * (2.0 * PI).ln()
}

/// Runs the augmented CD-EKF over `data` and returns `V_ML(θ)`.
pub fn negative_log_likelihood(
    theta: &ModelParams,
    data: &Dataset,
    setup: &FilterSetup,
) -> Result<Likelihood> {
    negative_log_likelihood_multi(theta, std::slice::from_ref(data), setup)
}

/// `V_ML(θ)` over independent experiments; the filter restarts for each one.
pub fn negative_log_likelihood_multi(
    theta: &ModelParams,
    experiments: &[Dataset],
    setup: &FilterSetup,
) -> Result<Likelihood> {
    theta.validate()?;
    let model = AugmentedModel::new(theta);
    let mut acc = 0.0;
    let mut samples = 0;
    for data in experiments {
        data.validate()?;
        match filter_pass(&model, theta, data, setup) {
            Ok(sum) if sum.is_finite() => acc += sum,
            Ok(_) | Err(_) => {
                return Ok(Likelihood {
                    value: f64::INFINITY,
                    samples: samples + data.len(),
                    diverged_at: Some(samples),
                })
            }
        }
        samples += data.len();
    }
    let n_y = 4.0;
    let value = 0.5 * acc + 0.5 * samples as f64 * n_y * (2.0 * PI).ln();
    Ok(Likelihood {
        value,
        samples,
        diverged_at: None,
    })
}

/// `Σ_k (ln det R_e,k + e_kᵀ R_e,k⁻¹ e_k)` for one experiment.
fn filter_pass(
    model: &AugmentedModel,
    theta: &ModelParams,
    data: &Dataset,
    setup: &FilterSetup,
) -> Result<f64> {
    let ts = data.sample_time();
    let mut mean = SVector::<f64, AUG>::zeros();
    let m0 = match setup.mean {
        InitialMean::SteadyState => match steady_state(&data.u[0], &Disturbance::zeros(), theta) {
            Ok(x) => x.m,
            Err(_) => levels_to_mass(&data.y[0], theta),
        },
        InitialMean::FirstMeasurement => levels_to_mass(&data.y[0], theta),
    };
    mean.fixed_rows_mut::<4>(0).copy_from(&m0);
    let mut belief = GaussianBelief::new(mean, setup.p0.matrix());

    let mut acc = 0.0;
    for k in 0..data.len() {
        let (post, inn) = measurement_update(model, &belief, &data.y[k])?;
        acc += inn.log_det_re + inn.mahalanobis;
        if k + 1 < data.len() {
            belief = time_update(model, &post, &data.u[k], ts, TIME_UPDATE_STEPS)?;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix1, Vector1};

    #[test]
    fn single_scalar_innovation() {
        let inn = Innovation::<1, 1> {
            e: Vector1::new(0.0),
            re: Matrix1::new(1.0),
            gain: Matrix1::new(0.0),
            log_det_re: 0.0,
            mahalanobis: 0.0,
        };
        let v = gaussian_nll(&[inn]);
        assert!((v - 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert!((v - 0.9189).abs() < 1e-4);
    }

    #[test]
    fn sum_terms_double_with_reset() {
        use crate::dynamics::Input;
        use crate::plant::{simulate_plant, NoiseMode};

        let p = ModelParams::estimated();
        let u: Vec<Input> = (0..40)
            .map(|k| Input::new(250.0 + k as f64, 300.0))
            .collect();
        let x0 = steady_state(&u[0], &Disturbance::zeros(), &p).unwrap().m;
        let traj = simulate_plant(x0, &u[..39], &[], &p, 5.0, 10, NoiseMode::FULL, 4).unwrap();
        let ds = Dataset::new(
            (0..40).map(|k| 5.0 * k as f64).collect(),
            traj.iter().map(|s| s.y).collect(),
            u,
        )
        .unwrap();
        let setup = FilterSetup::default();
        let once = negative_log_likelihood(&p, &ds, &setup).unwrap();
        let twice = negative_log_likelihood_multi(&p, &[ds.clone(), ds], &setup).unwrap();
        assert_eq!(twice.samples, 80);
        let constant = 0.5 * 40.0 * 4.0 * (2.0 * PI).ln();
        let sum_once = once.value - constant;
        let sum_twice = twice.value - 2.0 * constant;
        assert!((sum_twice - 2.0 * sum_once).abs() < 1e-9 * sum_once.abs());
    }

    #[test]
    fn divergence_is_flagged_not_nan() {
        use crate::dynamics::{Input, Levels};
        let p = ModelParams::estimated();
        let ds = Dataset::new(
            vec![0.0, 5.0, 10.0],
            vec![Levels::new(f64::NAN, 1.0, 1.0, 1.0); 3],
            vec![Input::new(300.0, 300.0); 3],
        )
        .unwrap();
        let l = negative_log_likelihood(&p, &ds, &FilterSetup::default()).unwrap();
        assert!(!l.is_finite());
        assert_eq!(l.value, f64::INFINITY);
    }
}

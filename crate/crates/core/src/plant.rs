//! Stochastic simulation of the four-tank plant.
//!
//! The SDE is stepped with Euler–Maruyama and the masses are clamped at zero
//! after every substep. Inputs and disturbances are held constant over each
//! sampling interval.

use nalgebra::Vector4;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{mass_rate, measure, Disturbance, Input, Levels, Mass, PlantState};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::{stream, Stream};

/// Default Euler–Maruyama substeps per sampling interval.
pub const DEFAULT_SUBSTEPS: usize = 10;

/// Which noise sources the simulator draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseMode {
    pub process: bool,
    pub measurement: bool,
}

impl NoiseMode {
    pub const FULL: NoiseMode = NoiseMode {
        process: true,
        measurement: true,
    };
    pub const NONE: NoiseMode = NoiseMode {
        process: false,
        measurement: false,
    };
    pub const MEASUREMENT_ONLY: NoiseMode = NoiseMode {
        process: false,
        measurement: true,
    };
}

/// A plant instance that can be stepped sample by sample.
#[derive(Debug, Clone)]
pub struct Plant {
    params: ModelParams,
    substeps: usize,
    noise: NoiseMode,
    state: PlantState,
    process_rng: ChaCha8Rng,
    measurement_rng: ChaCha8Rng,
}

impl Plant {
    pub fn new(
        x0: Mass,
        params: ModelParams,
        substeps: usize,
        noise: NoiseMode,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if substeps == 0 {
            return Err(Error::InvalidArgument("substeps must be at least 1".into()));
        }
        if x0.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::Domain(format!(
                "initial masses {x0:?} must be non-negative"
            )));
        }
        Ok(Self {
            params,
            substeps,
            noise,
            state: PlantState::new(x0, 0.0),
            process_rng: stream(seed, Stream::ProcessNoise),
            measurement_rng: stream(seed, Stream::MeasurementNoise),
        })
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Levels at the current time with measurement noise added.
    pub fn measure(&mut self) -> Levels {
        let mut y = measure(&self.state.m, &self.params);
        if self.noise.measurement {
            for i in 0..4 {
                let xi: f64 = StandardNormal.sample(&mut self.measurement_rng);
                y[i] += self.params.r2[i].sqrt() * xi;
            }
        }
        y
    }

    /// Applies `(u, d)` over the next `dt` seconds.
    pub fn advance(&mut self, u: &Input, d: &Disturbance, dt: f64) {
        let h = dt / self.substeps as f64;
        let sqrt_h = h.sqrt();
        let sigma = Vector4::from(self.params.sigma);
        let mut m = self.state.m;
        for _ in 0..self.substeps {
            let mut next = m + mass_rate(&m, u, d, &self.params) * h;
            if self.noise.process {
                for i in 0..4 {
                    let xi: f64 = StandardNormal.sample(&mut self.process_rng);
                    next[i] += sigma[i] * sqrt_h * xi;
                }
            }
            m = next.map(|v| v.max(0.0));
        }
        self.state = PlantState::new(m, self.state.t + dt);
    }
}

/// One sample of a simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantSample {
    pub state: PlantState,
    pub y: Levels,
}

/// Open-loop simulation over `inputs.len()` sampling intervals.
///
/// Returns `inputs.len() + 1` samples; sample `k` is taken at `k * ts` before
/// input `k` is applied. `disturbances` is either empty (no disturbance) or
/// one entry per interval.
#[allow(clippy::too_many_arguments)]
pub fn simulate_plant(
    x0: Mass,
    inputs: &[Input],
    disturbances: &[Disturbance],
    params: &ModelParams,
    ts: f64,
    substeps: usize,
    noise: NoiseMode,
    seed: u64,
) -> Result<Vec<PlantSample>> {
    if !disturbances.is_empty() && disturbances.len() != inputs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} disturbance entries for {} input intervals",
            disturbances.len(),
            inputs.len()
        )));
    }
    if !(ts > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling time {ts} must be positive"
        )));
    }
    let mut plant = Plant::new(x0, *params, substeps, noise, seed)?;
    let mut out = Vec::with_capacity(inputs.len() + 1);
    for (k, u) in inputs.iter().enumerate() {
        let y = plant.measure();
        out.push(PlantSample {
            state: *plant.state(),
            y,
        });
        let d = disturbances
            .get(k)
            .copied()
            .unwrap_or_else(Disturbance::zeros);
        plant.advance(u, &d, ts);
    }
    let y = plant.measure();
    out.push(PlantSample {
        state: *plant.state(),
        y,
    });
    Ok(out)
}

/// Noise-free level trajectory from RK4, one entry per sample.
pub fn simulate_levels(
    x0: Mass,
    inputs: &[Input],
    params: &ModelParams,
    ts: f64,
    substeps: usize,
) -> Result<Vec<Levels>> {
    let mut m = x0;
    let mut out = Vec::with_capacity(inputs.len() + 1);
    out.push(measure(&m, params));
    for u in inputs {
        m = crate::dynamics::propagate(&m, u, &Disturbance::zeros(), params, ts, substeps)?
            .map(|v| v.max(0.0));
        out.push(measure(&m, params));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::steady_state;

    fn steady(p: &ModelParams) -> Mass {
        steady_state(&Input::new(300.0, 300.0), &Disturbance::zeros(), p)
            .unwrap()
            .m
    }

    #[test]
    fn deterministic_limit_matches_rk4() {
        let p = ModelParams::estimated();
        let x0 = steady(&p);
        let inputs: Vec<Input> = (0..60)
            .map(|k| {
                if k < 30 {
                    Input::new(280.0, 310.0)
                } else {
                    Input::new(320.0, 270.0)
                }
            })
            .collect();
        let em = simulate_plant(x0, &inputs, &[], &p, 5.0, 100, NoiseMode::NONE, 1).unwrap();
        let rk = simulate_levels(x0, &inputs, &p, 5.0, 10).unwrap();
        assert_eq!(em.len(), 61);
        for (s, y) in em.iter().zip(&rk) {
            assert!((s.y - y).amax() < 1e-3, "{} vs {}", s.y, y);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let p = ModelParams::filter_tuning();
        let inputs = vec![Input::new(300.0, 250.0); 50];
        let a = simulate_plant(steady(&p), &inputs, &[], &p, 5.0, 10, NoiseMode::FULL, 9).unwrap();
        let b = simulate_plant(steady(&p), &inputs, &[], &p, 5.0, 10, NoiseMode::FULL, 9).unwrap();
        let c = simulate_plant(steady(&p), &inputs, &[], &p, 5.0, 10, NoiseMode::FULL, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn masses_stay_non_negative() {
        // large diffusion near empty tanks
        let mut p = ModelParams::estimated();
        p.sigma = [200.0; 4];
        let inputs = vec![Input::new(0.0, 0.0); 200];
        let traj = simulate_plant(
            Mass::repeat(50.0),
            &inputs,
            &[],
            &p,
            5.0,
            10,
            NoiseMode::FULL,
            3,
        )
        .unwrap();
        assert!(traj.iter().all(|s| s.state.m.iter().all(|m| *m >= 0.0)));
        assert!(traj.iter().any(|s| s.state.m.iter().any(|m| *m == 0.0)));
    }

    #[test]
    fn monte_carlo_mean_matches_deterministic_level() {
        let p = ModelParams::estimated();
        let x0 = steady(&p);
        let inputs = vec![Input::new(300.0, 300.0); 1000];
        let traj = simulate_plant(x0, &inputs, &[], &p, 5.0, 10, NoiseMode::FULL, 2024).unwrap();
        let y1: Vec<f64> = traj[1..].iter().map(|s| s.y[0]).collect();
        let n = y1.len() as f64;
        let mean = y1.iter().sum::<f64>() / n;
        let std = (y1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let level = measure(&x0, &p)[0];
        assert!(
            (mean - level).abs() < 3.0 * std / n.sqrt(),
            "{mean} vs {level}"
        );
    }

    #[test]
    fn disturbance_length_is_checked() {
        let p = ModelParams::estimated();
        let inputs = vec![Input::new(300.0, 300.0); 3];
        let d = vec![Disturbance::zeros(); 2];
        assert!(simulate_plant(steady(&p), &inputs, &d, &p, 5.0, 10, NoiseMode::NONE, 0).is_err());
    }
}

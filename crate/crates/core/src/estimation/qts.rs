//! Disturbance-augmented four-tank models for the CD-EKF and the CD-KF.
//!
//! The augmented state is `[m₁..m₄, d₁..d₄]`: tank masses followed by the
//! unknown inflows, modelled as integrated white noise.

use nalgebra::{Matrix4, SMatrix, SVector, Vector4};

use super::{
    measurement_update, time_update, ContinuousDiscreteModel, GaussianBelief, Innovation,
    TIME_UPDATE_STEPS,
};
use crate::dynamics::{
    mass_rate, output_matrix, state_jacobian, steady_state, Disturbance, Input, LinearModel, Mass,
};
use crate::error::Result;
use crate::params::ModelParams;

/// Augmented state dimension.
pub const AUG: usize = 8;
/// Measurement dimension.
pub const NY: usize = 4;

pub type AugVector = SVector<f64, AUG>;
pub type AugMatrix = SMatrix<f64, AUG, AUG>;

fn split(x: &AugVector) -> (Mass, Disturbance) {
    (
        x.fixed_rows::<4>(0).into_owned(),
        x.fixed_rows::<4>(4).into_owned(),
    )
}

fn diffusion(params: &ModelParams) -> AugMatrix {
    let mut q = AugMatrix::zeros();
    for i in 0..4 {
        q[(i, i)] = params.sigma[i].powi(2);
        q[(i + 4, i + 4)] = params.sigma_d[i].powi(2);
    }
    q
}

fn measurement_matrix(params: &ModelParams) -> SMatrix<f64, NY, AUG> {
    let mut c = SMatrix::<f64, NY, AUG>::zeros();
    c.fixed_view_mut::<4, 4>(0, 0)
        .copy_from(&output_matrix(params));
    c
}

/// `A_aug P + P A_augᵀ + Q` for `A_aug = [[A, ρI], [0, 0]]` with the sparse
/// `A` of the cascade. Only the first four rows of `A_aug P` are non-zero.
fn augmented_covariance_rate(
    a: &Matrix4<f64>,
    rho: f64,
    p: &AugMatrix,
    q: &AugMatrix,
) -> AugMatrix {
    let mut ap = AugMatrix::zeros();
    for c in 0..AUG {
        ap[(0, c)] = a[(0, 0)] * p[(0, c)] + a[(0, 2)] * p[(2, c)] + rho * p[(4, c)];
        ap[(1, c)] = a[(1, 1)] * p[(1, c)] + a[(1, 3)] * p[(3, c)] + rho * p[(5, c)];
        ap[(2, c)] = a[(2, 2)] * p[(2, c)] + rho * p[(6, c)];
        ap[(3, c)] = a[(3, 3)] * p[(3, c)] + rho * p[(7, c)];
    }
    ap + ap.transpose() + q
}

/// Nonlinear augmented model, used by the CD-EKF.
#[derive(Debug, Clone)]
pub struct AugmentedModel {
    params: ModelParams,
    q: AugMatrix,
    c: SMatrix<f64, NY, AUG>,
    r: Matrix4<f64>,
}

impl AugmentedModel {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            params: *params,
            q: diffusion(params),
            c: measurement_matrix(params),
            r: Matrix4::from_diagonal(&Vector4::from(params.r2)),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

impl ContinuousDiscreteModel<AUG, NY> for AugmentedModel {
    type Input = Input;

    fn drift(&self, x: &AugVector, u: &Input) -> AugVector {
        let (m, d) = split(x);
        let mut out = AugVector::zeros();
        out.fixed_rows_mut::<4>(0)
            .copy_from(&mass_rate(&m, u, &d, &self.params));
        out
    }

    fn drift_jacobian(&self, x: &AugVector, _u: &Input) -> AugMatrix {
        let (m, _) = split(x);
        let mut j = AugMatrix::zeros();
        j.fixed_view_mut::<4, 4>(0, 0)
            .copy_from(&state_jacobian(&m, &self.params));
        for i in 0..4 {
            j[(i, i + 4)] = self.params.rho;
        }
        j
    }

    fn diffusion_cov(&self) -> AugMatrix {
        self.q
    }

    fn output(&self, x: &AugVector) -> Vector4<f64> {
        self.c * x
    }

    fn output_jacobian(&self, _x: &AugVector) -> SMatrix<f64, NY, AUG> {
        self.c
    }

    fn measurement_cov(&self) -> Matrix4<f64> {
        self.r
    }

    fn covariance_rate(&self, x: &AugVector, _u: &Input, p: &AugMatrix) -> AugMatrix {
        let (m, _) = split(x);
        augmented_covariance_rate(
            &state_jacobian(&m, &self.params),
            self.params.rho,
            p,
            &self.q,
        )
    }
}

/// Linear augmented model in deviation variables, used by the CD-KF.
#[derive(Debug, Clone)]
pub struct LinearAugmentedModel {
    lin: LinearModel,
    rho: f64,
    a: AugMatrix,
    b: SMatrix<f64, AUG, 2>,
    q: AugMatrix,
    c: SMatrix<f64, NY, AUG>,
    r: Matrix4<f64>,
}

impl LinearAugmentedModel {
    /// `tuning` supplies `σ`, `σ_d` and `R`.
    pub fn new(lin: &LinearModel, tuning: &ModelParams) -> Self {
        let mut a = AugMatrix::zeros();
        a.fixed_view_mut::<4, 4>(0, 0).copy_from(&lin.a);
        a.fixed_view_mut::<4, 4>(0, 4).copy_from(&lin.e);
        let mut b = SMatrix::<f64, AUG, 2>::zeros();
        b.fixed_view_mut::<4, 2>(0, 0).copy_from(&lin.b);
        let mut c = SMatrix::<f64, NY, AUG>::zeros();
        c.fixed_view_mut::<4, 4>(0, 0).copy_from(&lin.c);
        Self {
            lin: lin.clone(),
            rho: lin.e[(0, 0)],
            a,
            b,
            q: diffusion(tuning),
            c,
            r: Matrix4::from_diagonal(&Vector4::from(tuning.r2)),
        }
    }

    pub fn linear_model(&self) -> &LinearModel {
        &self.lin
    }

    pub fn augmented_a(&self) -> &AugMatrix {
        &self.a
    }
}

impl ContinuousDiscreteModel<AUG, NY> for LinearAugmentedModel {
    /// Input deviation from `u_s`.
    type Input = Input;

    fn drift(&self, x: &AugVector, u: &Input) -> AugVector {
        self.a * x + self.b * u
    }

    fn drift_jacobian(&self, _x: &AugVector, _u: &Input) -> AugMatrix {
        self.a
    }

    fn diffusion_cov(&self) -> AugMatrix {
        self.q
    }

    fn output(&self, x: &AugVector) -> Vector4<f64> {
        self.c * x
    }

    fn output_jacobian(&self, _x: &AugVector) -> SMatrix<f64, NY, AUG> {
        self.c
    }

    fn measurement_cov(&self) -> Matrix4<f64> {
        self.r
    }

    fn covariance_rate(&self, _x: &AugVector, _u: &Input, p: &AugMatrix) -> AugMatrix {
        augmented_covariance_rate(&self.lin.a, self.rho, p, &self.q)
    }
}

/// Initial covariance: independent masses and disturbances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialCovariance {
    /// g².
    pub mass: f64,
    /// (cm³/s)².
    pub disturbance: f64,
}

impl Default for InitialCovariance {
    fn default() -> Self {
        Self {
            mass: 1e2,
            disturbance: 1e1,
        }
    }
}

impl InitialCovariance {
    pub fn matrix(&self) -> AugMatrix {
        let mut p = AugMatrix::zeros();
        for i in 0..4 {
            p[(i, i)] = self.mass;
            p[(i + 4, i + 4)] = self.disturbance;
        }
        p
    }
}

/// Mean at the steady state of `u` with zero disturbance.
pub fn initial_belief(
    u: &Input,
    params: &ModelParams,
    p0: &InitialCovariance,
) -> Result<GaussianBelief<AUG>> {
    let m = steady_state(u, &Disturbance::zeros(), params)?.m;
    let mut mean = AugVector::zeros();
    mean.fixed_rows_mut::<4>(0).copy_from(&m);
    Ok(GaussianBelief::new(mean, p0.matrix()))
}

pub fn ekf_time_update(
    belief: &GaussianBelief<AUG>,
    u: &Input,
    ts: f64,
    params: &ModelParams,
) -> Result<GaussianBelief<AUG>> {
    time_update(
        &AugmentedModel::new(params),
        belief,
        u,
        ts,
        TIME_UPDATE_STEPS,
    )
}

pub fn ekf_measurement_update(
    belief: &GaussianBelief<AUG>,
    y: &Vector4<f64>,
    params: &ModelParams,
) -> Result<(GaussianBelief<AUG>, Innovation<AUG, NY>)> {
    measurement_update(&AugmentedModel::new(params), belief, y)
}

/// `belief` and `u_dev` are deviations from the model's operating point.
pub fn kf_time_update(
    belief: &GaussianBelief<AUG>,
    u_dev: &Input,
    ts: f64,
    model: &LinearAugmentedModel,
) -> Result<GaussianBelief<AUG>> {
    time_update(model, belief, u_dev, ts, TIME_UPDATE_STEPS)
}

/// `y_dev` is the measured deviation `Y_k = y_k − C x_s`.
pub fn kf_measurement_update(
    belief: &GaussianBelief<AUG>,
    y_dev: &Vector4<f64>,
    model: &LinearAugmentedModel,
) -> Result<(GaussianBelief<AUG>, Innovation<AUG, NY>)> {
    measurement_update(model, belief, y_dev)
}

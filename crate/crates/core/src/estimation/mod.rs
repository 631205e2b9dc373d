//! Continuous-discrete Kalman filtering.
//!
//! The filters here are explicit state machines: every update takes a
//! [`GaussianBelief`] and returns a new one. The time update integrates the
//! mean ODE and the covariance Lyapunov ODE jointly with fixed-step RK4; the
//! measurement update uses the Joseph form of the covariance correction.

mod qts;

pub use qts::{
    ekf_measurement_update, ekf_time_update, initial_belief, kf_measurement_update, kf_time_update,
    AugMatrix, AugVector, AugmentedModel, InitialCovariance, LinearAugmentedModel, AUG, NY,
};

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::ode::{integrate_rk4, OdeState};

/// RK4 steps per sampling interval in every filter time update.
pub const TIME_UPDATE_STEPS: usize = 10;

/// A continuous-discrete stochastic model
/// `dx = f(x, u) dt + σ dω`, `y_k = g(x_k) + v_k`.
pub trait ContinuousDiscreteModel<const N: usize, const M: usize> {
    type Input;

    fn drift(&self, x: &SVector<f64, N>, u: &Self::Input) -> SVector<f64, N>;
    fn drift_jacobian(&self, x: &SVector<f64, N>, u: &Self::Input) -> SMatrix<f64, N, N>;
    /// `σσᵀ`.
    fn diffusion_cov(&self) -> SMatrix<f64, N, N>;
    fn output(&self, x: &SVector<f64, N>) -> SVector<f64, M>;
    fn output_jacobian(&self, x: &SVector<f64, N>) -> SMatrix<f64, M, N>;
    /// `R`.
    fn measurement_cov(&self) -> SMatrix<f64, M, M>;

    /// `A P + P Aᵀ + σσᵀ` with `A` evaluated at `x`.
    fn covariance_rate(
        &self,
        x: &SVector<f64, N>,
        u: &Self::Input,
        p: &SMatrix<f64, N, N>,
    ) -> SMatrix<f64, N, N> {
        let ap = self.drift_jacobian(x, u) * p;
        ap + ap.transpose() + self.diffusion_cov()
    }
}

/// Filter mean and covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief<const N: usize> {
    pub mean: SVector<f64, N>,
    pub cov: SMatrix<f64, N, N>,
}

impl<const N: usize> GaussianBelief<N> {
    pub fn new(mean: SVector<f64, N>, cov: SMatrix<f64, N, N>) -> Self {
        Self { mean, cov }
    }

    /// `‖P − Pᵀ‖∞` (max-abs entry).
    pub fn asymmetry(&self) -> f64 {
        (self.cov - self.cov.transpose()).amax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (self.cov + self.cov.transpose()) * 0.5;
        nalgebra::DMatrix::from_column_slice(N, N, sym.as_slice())
            .symmetric_eigenvalues()
            .min()
    }
}

/// Innovation statistics of one measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Innovation<const N: usize, const M: usize> {
    /// `e = y − g(x̂)`.
    pub e: SVector<f64, M>,
    /// `R_e = R + C P Cᵀ`.
    pub re: SMatrix<f64, M, M>,
    /// `K = P Cᵀ R_e⁻¹`.
    pub gain: SMatrix<f64, N, M>,
    /// `ln det R_e`.
    pub log_det_re: f64,
    /// `eᵀ R_e⁻¹ e`.
    pub mahalanobis: f64,
}

impl<const N: usize, const M: usize> Innovation<N, M> {
    /// `e_i / √(R_e)_ii`.
    pub fn normalized(&self) -> SVector<f64, M> {
        SVector::from_fn(|i, _| self.e[i] / self.re[(i, i)].sqrt())
    }
}

#[derive(Clone)]
struct MeanCov<const N: usize> {
    mean: SVector<f64, N>,
    cov: SMatrix<f64, N, N>,
}

impl<const N: usize> OdeState for MeanCov<N> {
    fn add_scaled(&self, h: f64, k: &Self) -> Self {
        Self {
            mean: self.mean + k.mean * h,
            cov: self.cov + k.cov * h,
        }
    }

    fn is_finite(&self) -> bool {
        self.mean.is_finite() && self.cov.is_finite()
    }
}

fn symmetrize<const N: usize>(p: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (p + p.transpose()) * 0.5
}

/// Propagates `belief` over `dt` with input `u` held.
pub fn time_update<const N: usize, const M: usize, Mdl>(
    model: &Mdl,
    belief: &GaussianBelief<N>,
    u: &Mdl::Input,
    dt: f64,
    steps: usize,
) -> Result<GaussianBelief<N>>
where
    Mdl: ContinuousDiscreteModel<N, M>,
{
    if dt == 0.0 {
        return Ok(*belief);
    }
    let start = MeanCov {
        mean: belief.mean,
        cov: belief.cov,
    };
    let end = integrate_rk4(
        |_, s: &MeanCov<N>| MeanCov {
            mean: model.drift(&s.mean, u),
            cov: model.covariance_rate(&s.mean, u, &s.cov),
        },
        start,
        0.0,
        dt,
        steps,
    )?;
    Ok(GaussianBelief::new(end.mean, symmetrize(&end.cov)))
}

/// Corrects `belief` with measurement `y` (Joseph form).
pub fn measurement_update<const N: usize, const M: usize, Mdl>(
    model: &Mdl,
    belief: &GaussianBelief<N>,
    y: &SVector<f64, M>,
) -> Result<(GaussianBelief<N>, Innovation<N, M>)>
where
    Mdl: ContinuousDiscreteModel<N, M>,
{
    let c = model.output_jacobian(&belief.mean);
    let r = model.measurement_cov();
    let e = y - model.output(&belief.mean);
    let pct = belief.cov * c.transpose();
    let re = symmetrize(&(r + c * pct));
    let chol = re
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("innovation covariance".into()))?;
    // K = P Cᵀ Re⁻¹  <=>  Re Kᵀ = C P
    let gain = chol.solve(&pct.transpose()).transpose();
    let whitened = chol
        .l()
        .solve_lower_triangular(&e)
        .expect("Cholesky factor is invertible");
    let log_det_re = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();

    let ikc = SMatrix::<f64, N, N>::identity() - gain * c;
    let cov = ikc * belief.cov * ikc.transpose() + gain * r * gain.transpose();
    let posterior = GaussianBelief::new(belief.mean + gain * e, symmetrize(&cov));
    let innovation = Innovation {
        e,
        re,
        gain,
        log_det_re,
        mahalanobis: whitened.norm_squared(),
    };
    Ok((posterior, innovation))
}

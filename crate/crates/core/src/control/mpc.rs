use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::Input;
use crate::error::{Error, Result};

/// Tuning shared by the linear and nonlinear MPC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    /// CV tracking weight.
    pub q: Matrix2<f64>,
    /// Input-move weight.
    pub s: Matrix2<f64>,
    pub horizon: usize,
    pub ts: f64,
    /// Common pump bounds, cm³/s.
    pub bounds: (f64, f64),
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            q: Matrix2::from_diagonal(&Vector2::new(10.0, 10.0)),
            s: Matrix2::from_diagonal(&Vector2::new(1.0, 1.0)),
            horizon: 160,
            ts: 5.0,
            bounds: (160.0, 350.0),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let psd = |m: &Matrix2<f64>| {
            (m - m.transpose()).amax() <= 1e-12 * (1.0 + m.amax())
                && m.symmetric_eigenvalues().min() >= -1e-12 * (1.0 + m.amax())
        };
        if !psd(&self.q) || !psd(&self.s) {
            return Err(Error::InvalidArgument(
                "Q and S must be symmetric positive semidefinite".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument(
                "horizon must be at least one step".into(),
            ));
        }
        if !(self.ts > 0.0) {
            return Err(Error::InvalidArgument(
                "sample time must be positive".into(),
            ));
        }
        let (lo, hi) = self.bounds;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "input bounds {:?} are invalid",
                self.bounds
            )));
        }
        Ok(())
    }

    pub(crate) fn clamp(&self, u: &Input) -> Input {
        u.map(|v| v.clamp(self.bounds.0, self.bounds.1))
    }
}

/// Result of one optimal control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    /// Planned inputs `u₀ … u_{N−1}`, absolute.
    pub inputs: Vec<Input>,
    /// Predicted CVs `z₁ … z_N`.
    pub predicted_z: Vec<Vector2<f64>>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    /// `(before, after)` merit values of every accepted line-search step,
    /// each pair at the penalty in force for that step. Empty for LMPC.
    pub merit_steps: Vec<(f64, f64)>,
}

/// The setpoint preview padded (or cut) to `n` steps by holding the last value.
pub fn extend_horizon(zbar: &[Vector2<f64>], n: usize) -> Result<Vec<Vector2<f64>>> {
    let last = *zbar
        .last()
        .ok_or_else(|| Error::InvalidArgument("setpoint preview is empty".into()))?;
    Ok((0..n)
        .map(|k| zbar.get(k).copied().unwrap_or(last))
        .collect())
}

/// `Σ_{k=1}^{N} ‖z_k − z̄_k‖²_Q + Σ_{k=0}^{N−1} ‖Δu_k‖²_S` with `Δu₀ = u₀ − u_prev`.
pub fn tracking_objective(
    cfg: &MpcConfig,
    z: &[Vector2<f64>],
    zbar: &[Vector2<f64>],
    u: &[Input],
    u_prev: &Input,
) -> f64 {
    let track: f64 = z
        .iter()
        .zip(zbar)
        .map(|(z, r)| (z - r).dot(&(cfg.q * (z - r))))
        .sum();
    let mut prev = *u_prev;
    let mut moves = 0.0;
    for uk in u {
        let du = uk - prev;
        moves += du.dot(&(cfg.s * du));
        prev = *uk;
    }
    track + moves
}

/// Symmetric square root of a 2×2 PSD matrix.
fn sqrt_psd(m: &Matrix2<f64>) -> Matrix2<f64> {
    let eig = m.symmetric_eigen();
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    eig.eigenvectors * Matrix2::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// `Gᵀ Q̄ G` with `Q̄ = blockdiag(Q, …, Q)`, for `G` with `2N` rows.
pub(crate) fn weighted_gram(g: &DMatrix<f64>, q: &Matrix2<f64>) -> DMatrix<f64> {
    let w = scale_rows(g, q);
    // An explicit transpose lets the product go through the blocked GEMM.
    w.transpose() * &w
}

/// `blockdiag(Q^{1/2}) M`.
pub(crate) fn scale_rows(m: &DMatrix<f64>, q: &Matrix2<f64>) -> DMatrix<f64> {
    let root = sqrt_psd(q);
    let mut out = m.clone();
    for k in 0..m.nrows() / 2 {
        let block = m.rows(2 * k, 2);
        out.rows_mut(2 * k, 2).copy_from(&(root * block));
    }
    out
}

/// `Q̄ v` for a stacked vector of 2-blocks.
pub(crate) fn weight_stacked(v: &DVector<f64>, q: &Matrix2<f64>) -> DVector<f64> {
    let mut out = v.clone();
    for k in 0..v.len() / 2 {
        let block = q * Vector2::new(v[2 * k], v[2 * k + 1]);
        out[2 * k] = block[0];
        out[2 * k + 1] = block[1];
    }
    out
}

/// `Dᵀ S̄ D` for the first-difference operator on `n` stacked 2-vectors.
pub(crate) fn move_penalty(s: &Matrix2<f64>, n: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        let diag = if k + 1 < n { s * 2.0 } else { *s };
        h.view_mut((2 * k, 2 * k), (2, 2)).copy_from(&diag);
        if k + 1 < n {
            h.view_mut((2 * k, 2 * k + 2), (2, 2)).copy_from(&(-s));
            h.view_mut((2 * k + 2, 2 * k), (2, 2)).copy_from(&(-s));
        }
    }
    h
}

/// `Dᵀ S̄ (D U − c)` with `c = (u_prev, 0, …)`.
pub(crate) fn move_gradient(s: &Matrix2<f64>, u: &[Input], u_prev: &Input) -> DVector<f64> {
    let n = u.len();
    let mut grad = DVector::zeros(2 * n);
    let mut prev = *u_prev;
    for k in 0..n {
        let w = s * (u[k] - prev);
        grad[2 * k] += w[0];
        grad[2 * k + 1] += w[1];
        if k > 0 {
            grad[2 * k - 2] -= w[0];
            grad[2 * k - 1] -= w[1];
        }
        prev = u[k];
    }
    grad
}

pub(crate) fn stack(v: &[Input]) -> DVector<f64> {
    DVector::from_iterator(2 * v.len(), v.iter().flat_map(|u| [u[0], u[1]]))
}

pub(crate) fn unstack(v: &DVector<f64>) -> Vec<Input> {
    (0..v.len() / 2)
        .map(|k| Input::new(v[2 * k], v[2 * k + 1]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn move_penalty_matches_explicit_difference() {
        let s = Matrix2::new(2.0, 0.5, 0.5, 1.0);
        let n = 4;
        let mut d = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..n {
            d.view_mut((2 * k, 2 * k), (2, 2)).fill_with_identity();
            if k > 0 {
                d.view_mut((2 * k, 2 * k - 2), (2, 2))
                    .copy_from(&-Matrix2::identity());
            }
        }
        let mut sbar = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..n {
            sbar.view_mut((2 * k, 2 * k), (2, 2)).copy_from(&s);
        }
        assert!((d.transpose() * &sbar * &d - move_penalty(&s, n)).amax() < 1e-14);

        let u = vec![
            Input::new(1.0, 2.0),
            Input::new(3.0, -1.0),
            Input::new(0.0, 0.0),
            Input::new(2.0, 2.0),
        ];
        let prev = Input::new(0.5, 0.5);
        let mut c = DVector::zeros(2 * n);
        c[0] = prev[0];
        c[1] = prev[1];
        let want = d.transpose() * &sbar * (&d * stack(&u) - c);
        assert!((want - move_gradient(&s, &u, &prev)).amax() < 1e-13);
    }

    #[test]
    fn gram_matches_dense_product() {
        let q = Matrix2::new(10.0, 1.0, 1.0, 3.0);
        let g = DMatrix::from_fn(6, 4, |i, j| (i as f64 - j as f64).sin());
        let mut qbar = DMatrix::zeros(6, 6);
        for k in 0..3 {
            qbar.view_mut((2 * k, 2 * k), (2, 2)).copy_from(&q);
        }
        assert!((g.transpose() * &qbar * &g - weighted_gram(&g, &q)).amax() < 1e-12);
        let v = DVector::from_fn(6, |i, _| i as f64);
        assert!((&qbar * &v - weight_stacked(&v, &q)).amax() < 1e-13);
    }

    #[test]
    fn horizon_extension() {
        let z = [Vector2::new(1.0, 2.0), Vector2::new(3.0, 4.0)];
        let e = extend_horizon(&z, 4).unwrap();
        assert_eq!(e[3], Vector2::new(3.0, 4.0));
        assert_eq!(extend_horizon(&z, 1).unwrap().len(), 1);
        assert!(extend_horizon(&[], 3).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(MpcConfig::default().validate().is_ok());
        let bad = MpcConfig {
            bounds: (350.0, 160.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let neg = MpcConfig {
            q: Matrix2::new(-1.0, 0.0, 0.0, 1.0),
            ..Default::default()
        };
        assert!(neg.validate().is_err());
        assert_eq!(
            MpcConfig::default().horizon as f64 * MpcConfig::default().ts,
            800.0
        );
    }
}

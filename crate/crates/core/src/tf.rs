//! Transfer functions from pump flows to bottom-tank levels.

use nalgebra::{Complex, Matrix2, Matrix2x4, Matrix4, Matrix4x2};
use num_complex::Complex64;

use crate::dynamics::LinearModel;
use crate::error::{Error, Result};

/// `k / ((τ₁ s + 1)(τ₂ s + 1))` with `τ₁ ≥ τ₂ > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderTF {
    pub k: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl SecondOrderTF {
    pub fn new(k: f64, tau_a: f64, tau_b: f64) -> Result<Self> {
        let (tau1, tau2) = if tau_a >= tau_b {
            (tau_a, tau_b)
        } else {
            (tau_b, tau_a)
        };
        if !(tau2 > 0.0) || !k.is_finite() || !tau1.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "invalid second-order model k={k}, tau=({tau1}, {tau2})"
            )));
        }
        Ok(Self { k, tau1, tau2 })
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        let one = Complex::new(1.0, 0.0);
        Complex::new(self.k, 0.0) / ((s * self.tau1 + one) * (s * self.tau2 + one))
    }
}

/// `G(s) = C_z (sI − A)⁻¹ B` of a linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    a: Matrix4<f64>,
    b: Matrix4x2<f64>,
    cz: Matrix2x4<f64>,
}

/// Builds the 2×2 transfer matrix of a linearized model. `A` must be Hurwitz.
pub fn transfer_functions(model: &LinearModel) -> Result<TransferMatrix> {
    let eig = model.a.complex_eigenvalues();
    if eig.iter().any(|l| !(l.re < 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "A is not Hurwitz: eigenvalues {eig:?}"
        )));
    }
    Ok(TransferMatrix {
        a: model.a,
        b: model.b,
        cz: model.cz,
    })
}

impl TransferMatrix {
    /// Evaluates every entry at complex frequency `s`.
    pub fn eval(&self, s: Complex64) -> Matrix2<Complex64> {
        let shifted: Matrix4<Complex64> =
            Matrix4::<Complex64>::identity() * s - self.a.map(|v| Complex::new(v, 0.0));
        let solved = shifted
            .lu()
            .solve(&self.b.map(|v| Complex::new(v, 0.0)))
            .expect("sI - A is invertible off the spectrum");
        self.cz.map(|v| Complex::new(v, 0.0)) * solved
    }

    /// Steady-state gains `−C_z A⁻¹ B`.
    pub fn dc_gain(&self) -> Matrix2<f64> {
        let solved = self.a.lu().solve(&self.b).expect("Hurwitz A is invertible");
        -(self.cz * solved)
    }

    /// Reduces entry `(row, col)` (zero-based) to the form of a two-tank cascade.
    ///
    /// The state graph of the four-tank model is acyclic, so every entry is a sum
    /// over directed paths from the states fed by the input to the states read
    /// by the output, each path contributing one pole per tank it visits. Only
    /// entries made of a single two-tank path have the second-order form.
    pub fn extract_second_order(&self, row: usize, col: usize) -> Result<SecondOrderTF> {
        let reject = |reason: String| Error::NotSecondOrder {
            row: row + 1,
            col: col + 1,
            reason,
        };
        let sources: Vec<usize> = (0..4).filter(|&i| self.b[(i, col)] != 0.0).collect();
        let sinks: Vec<usize> = (0..4).filter(|&i| self.cz[(row, i)] != 0.0).collect();

        let mut paths = Vec::new();
        for &s in &sources {
            let mut stack = vec![vec![s]];
            while let Some(path) = stack.pop() {
                if path.len() > 4 {
                    return Err(reject("state graph has a cycle".into()));
                }
                let last = *path.last().unwrap();
                if sinks.contains(&last) {
                    paths.push(path.clone());
                }
                for next in 0..4 {
                    if next != last && self.a[(next, last)] != 0.0 {
                        let mut longer = path.clone();
                        longer.push(next);
                        stack.push(longer);
                    }
                }
            }
        }

        match paths.as_slice() {
            [] => Err(reject("input does not reach the output".into())),
            [path] if path.len() == 2 => {
                let k = self.dc_gain()[(row, col)];
                if k == 0.0 {
                    return Err(reject("zero steady-state gain".into()));
                }
                let tau = |i: usize| -1.0 / self.a[(i, i)];
                SecondOrderTF::new(k, tau(path[0]), tau(path[1]))
            }
            [path] => Err(reject(format!(
                "single path through {} tank(s) gives order {}",
                path.len(),
                path.len()
            ))),
            many => Err(reject(format!(
                "{} parallel paths (orders {:?})",
                many.len(),
                many.iter().map(Vec::len).collect::<Vec<_>>()
            ))),
        }
    }

    /// `z₁` from `u₂`: pump 2 through tank 3 into tank 1.
    pub fn g12(&self) -> Result<SecondOrderTF> {
        self.extract_second_order(0, 1)
    }

    /// `z₂` from `u₁`: pump 1 through tank 4 into tank 2.
    pub fn g21(&self) -> Result<SecondOrderTF> {
        self.extract_second_order(1, 0)
    }
}

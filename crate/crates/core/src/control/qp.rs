//! Box-constrained strictly convex QP, `min ½ xᵀHx + gᵀx` s.t. `lb ≤ x ≤ ub`,
//! solved by a primal active-set method.
//!
//! Equality-constrained subproblems are solved with whichever of two
//! factorizations is smaller: the range-space form on the working set, using
//! lazily computed columns of `H⁻¹` from a single Cholesky factor of `H`, or
//! the reduced Hessian on the free set.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpDiagnostics {
    pub iterations: usize,
    /// Scaled stationarity residual on the free variables.
    pub kkt_residual: f64,
    /// Indices held at a bound at the solution.
    pub active: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub diagnostics: QpDiagnostics,
}

/// Prefactored QP Hessian, reusable across gradients and bounds.
#[derive(Debug, Clone)]
pub struct BoxQp {
    h: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    hinv_cols: Vec<Option<DVector<f64>>>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Bound {
    Lower,
    Upper,
}

impl BoxQp {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(Error::InvalidArgument("QP Hessian must be square".into()));
        }
        let asym = (&h - h.transpose()).amax();
        if asym > 1e-9 * (1.0 + h.amax()) {
            return Err(Error::NotPositiveDefinite(
                "QP Hessian is not symmetric".into(),
            ));
        }
        let chol = Cholesky::new(h.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("QP Hessian".into()))?;
        Ok(Self {
            h,
            chol,
            hinv_cols: vec![None; n],
        })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.h
    }

    fn hinv_col(&mut self, j: usize) -> &DVector<f64> {
        if self.hinv_cols[j].is_none() {
            let mut e = DVector::zeros(self.dim());
            e[j] = 1.0;
            self.hinv_cols[j] = Some(self.chol.solve(&e));
        }
        self.hinv_cols[j].as_ref().expect("column cached")
    }

    /// Minimizer of the quadratic with `x_W` fixed to `b_W`.
    fn equality_solve(
        &mut self,
        g: &DVector<f64>,
        fixed: &[usize],
        values: &[f64],
    ) -> DVector<f64> {
        let n = self.dim();
        let nw = fixed.len();
        if nw == 0 {
            return -self.chol.solve(g);
        }
        if nw == n {
            return DVector::from_column_slice(values);
        }
        if nw <= n - nw {
            let hg = self.chol.solve(g);
            let mut m = DMatrix::zeros(nw, nw);
            let mut cols = DMatrix::zeros(n, nw);
            for (c, &j) in fixed.iter().enumerate() {
                let col = self.hinv_col(j).clone();
                for (r, &i) in fixed.iter().enumerate() {
                    m[(r, c)] = col[i];
                }
                cols.set_column(c, &col);
            }
            let rhs =
                DVector::from_iterator(nw, fixed.iter().zip(values).map(|(&i, b)| -(b + hg[i])));
            let nu = match Cholesky::new(m.clone()) {
                Some(c) => c.solve(&rhs),
                None => m.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(nw)),
            };
            let mut x = -hg - cols * nu;
            for (&i, &b) in fixed.iter().zip(values) {
                x[i] = b;
            }
            x
        } else {
            let mut is_fixed = vec![false; n];
            for &i in fixed {
                is_fixed[i] = true;
            }
            let free: Vec<usize> = (0..n).filter(|&i| !is_fixed[i]).collect();
            let mut x = DVector::zeros(n);
            for (&i, &b) in fixed.iter().zip(values) {
                x[i] = b;
            }
            let nf = free.len();
            let mut hff = DMatrix::zeros(nf, nf);
            let mut rhs = DVector::zeros(nf);
            for (r, &i) in free.iter().enumerate() {
                let mut acc = -g[i];
                for (&j, &b) in fixed.iter().zip(values) {
                    acc -= self.h[(i, j)] * b;
                }
                rhs[r] = acc;
                for (c, &j) in free.iter().enumerate() {
                    hff[(r, c)] = self.h[(i, j)];
                }
            }
            let xf = Cholesky::new(hff).map(|c| c.solve(&rhs)).unwrap_or(rhs);
            for (r, &i) in free.iter().enumerate() {
                x[i] = xf[r];
            }
            x
        }
    }

    /// Solves the QP, optionally warm-started from `x0` (projected onto the
    /// box).
    pub fn solve(
        &mut self,
        g: &DVector<f64>,
        lb: &DVector<f64>,
        ub: &DVector<f64>,
        x0: Option<&DVector<f64>>,
    ) -> Result<QpSolution> {
        let n = self.dim();
        if g.len() != n || lb.len() != n || ub.len() != n {
            return Err(Error::InvalidArgument(
                "QP vector dimensions do not match H".into(),
            ));
        }
        if (0..n).any(|i| !(lb[i] <= ub[i])) {
            return Err(Error::InvalidArgument("QP bounds require lb <= ub".into()));
        }
        let project = |v: &DVector<f64>| DVector::from_fn(n, |i, _| v[i].clamp(lb[i], ub[i]));
        let mut x = match x0 {
            Some(v) if v.len() == n => project(v),
            _ => project(&-self.chol.solve(g)),
        };

        let mut state: Vec<Option<Bound>> = (0..n)
            .map(|i| {
                if x[i] <= lb[i] {
                    Some(Bound::Lower)
                } else if x[i] >= ub[i] {
                    Some(Bound::Upper)
                } else {
                    None
                }
            })
            .collect();

        let g_scale = 1.0 + g.amax();
        let limit = 10 * n.max(1);
        let mut iterations = 0;
        loop {
            if iterations >= limit {
                return Err(Error::QpIterationLimit { limit, last: x });
            }
            iterations += 1;

            let fixed: Vec<usize> = (0..n).filter(|&i| state[i].is_some()).collect();
            let values: Vec<f64> = fixed
                .iter()
                .map(|&i| {
                    if state[i] == Some(Bound::Lower) {
                        lb[i]
                    } else {
                        ub[i]
                    }
                })
                .collect();
            let target = self.equality_solve(g, &fixed, &values);
            let p = &target - &x;
            let x_scale = 1.0 + x.amax();

            if p.amax() > 1e-12 * x_scale {
                let mut alpha = 1.0;
                let mut blocking = None;
                for i in 0..n {
                    if state[i].is_some() {
                        continue;
                    }
                    let (a, side) = if p[i] < 0.0 {
                        ((lb[i] - x[i]) / p[i], Bound::Lower)
                    } else if p[i] > 0.0 {
                        ((ub[i] - x[i]) / p[i], Bound::Upper)
                    } else {
                        continue;
                    };
                    if a < alpha {
                        alpha = a.max(0.0);
                        blocking = Some((i, side));
                    }
                }
                x += &p * alpha;
                if let Some((i, side)) = blocking {
                    x[i] = if side == Bound::Lower { lb[i] } else { ub[i] };
                    state[i] = Some(side);
                    continue;
                }
                x = target;
            }

            // Stationary on the working set: inspect the multipliers.
            let grad = &self.h * &x + g;
            let tol = 1e-12 * (g_scale + (&self.h * &x).amax());
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..n {
                if lb[i] == ub[i] {
                    continue;
                }
                let violation = match state[i] {
                    Some(Bound::Lower) => -grad[i],
                    Some(Bound::Upper) => grad[i],
                    None => continue,
                };
                if violation > tol && worst.is_none_or(|(_, v)| violation > v) {
                    worst = Some((i, violation));
                }
            }
            match worst {
                Some((i, _)) => state[i] = None,
                None => {
                    let x = self.refine(g, x, &state, lb, ub);
                    let grad = &self.h * &x + g;
                    let scale = g_scale + (&self.h * &x).amax();
                    let kkt_residual = (0..n)
                        .filter(|&i| state[i].is_none())
                        .map(|i| grad[i].abs())
                        .fold(0.0, f64::max)
                        / scale;
                    let active = (0..n).filter(|&i| state[i].is_some()).collect();
                    return Ok(QpSolution {
                        x,
                        diagnostics: QpDiagnostics {
                            iterations,
                            kkt_residual,
                            active,
                        },
                    });
                }
            }
        }
    }

    /// One step of iterative refinement on the free variables.
    fn refine(
        &mut self,
        g: &DVector<f64>,
        x: DVector<f64>,
        state: &[Option<Bound>],
        lb: &DVector<f64>,
        ub: &DVector<f64>,
    ) -> DVector<f64> {
        let fixed: Vec<usize> = (0..x.len()).filter(|&i| state[i].is_some()).collect();
        if fixed.len() == x.len() {
            return x;
        }
        let r = &self.h * &x + g;
        let zeros = vec![0.0; fixed.len()];
        let dx = self.equality_solve(&r, &fixed, &zeros);
        let refined = &x + dx;
        let feasible = (0..x.len()).all(|i| refined[i] >= lb[i] && refined[i] <= ub[i]);
        if feasible {
            refined
        } else {
            x
        }
    }
}

/// One-shot convenience wrapper around [`BoxQp`].
pub fn qp_solve(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
) -> Result<QpSolution> {
    BoxQp::new(h.clone())?.solve(g, lb, ub, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Projected gradient with a fixed step `1/L`; slow but independent.
    fn projected_gradient(
        h: &DMatrix<f64>,
        g: &DVector<f64>,
        lb: &DVector<f64>,
        ub: &DVector<f64>,
    ) -> DVector<f64> {
        let l = h.clone().symmetric_eigenvalues().max();
        let mut x = DVector::from_fn(g.len(), |i, _| 0.5 * (lb[i] + ub[i]));
        for _ in 0..200_000 {
            let step = &x - (h * &x + g) / l;
            let next = DVector::from_fn(x.len(), |i, _| step[i].clamp(lb[i], ub[i]));
            let change = (&next - &x).amax();
            x = next;
            if change < 1e-14 {
                break;
            }
        }
        x
    }

    fn random_problem(
        rng: &mut ChaCha8Rng,
        n: usize,
    ) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.5;
        let g = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let lb = DVector::from_fn(n, |_, _| rng.random_range(-1.0..0.0));
        let ub = DVector::from_fn(n, |i, _| lb[i] + rng.random_range(0.1..1.5));
        (h, g, lb, ub)
    }

    #[test]
    fn clipped_unconstrained_optimum() {
        let h = DMatrix::identity(2, 2);
        let g = DVector::from_vec(vec![-1.0, -1.0]);
        let s = qp_solve(&h, &g, &DVector::zeros(2), &DVector::repeat(2, 0.5)).unwrap();
        assert!((s.x - DVector::repeat(2, 0.5)).amax() < 1e-14);
        assert_eq!(s.diagnostics.active, vec![0, 1]);
    }

    #[test]
    fn interior_optimum() {
        let h = DMatrix::identity(2, 2);
        let g = DVector::from_vec(vec![-0.2, -0.2]);
        let s = qp_solve(&h, &g, &DVector::zeros(2), &DVector::repeat(2, 1.0)).unwrap();
        assert!((s.x - DVector::repeat(2, 0.2)).amax() < 1e-14);
        assert!(s.diagnostics.active.is_empty());
    }

    #[test]
    fn matches_projected_gradient_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (h, g, lb, ub) = random_problem(&mut rng, 6);
            let s = qp_solve(&h, &g, &lb, &ub).unwrap();
            let oracle = projected_gradient(&h, &g, &lb, &ub);
            assert!((&s.x - &oracle).amax() < 1e-6, "{} vs {}", s.x, oracle);
            assert!(s.diagnostics.kkt_residual < 1e-8);
        }
    }

    #[test]
    fn multipliers_have_correct_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let (h, g, lb, ub) = random_problem(&mut rng, 12);
            let s = qp_solve(&h, &g, &lb, &ub).unwrap();
            let grad = &h * &s.x + &g;
            for &i in &s.diagnostics.active {
                if s.x[i] == lb[i] {
                    assert!(grad[i] >= -1e-9);
                } else {
                    assert_eq!(s.x[i], ub[i]);
                    assert!(grad[i] <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn warm_start_gives_same_answer() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (h, g, lb, ub) = random_problem(&mut rng, 30);
        let mut qp = BoxQp::new(h).unwrap();
        let cold = qp.solve(&g, &lb, &ub, None).unwrap();
        let warm = qp.solve(&g, &lb, &ub, Some(&cold.x)).unwrap();
        assert!((cold.x - warm.x).amax() < 1e-10);
        assert!(warm.diagnostics.iterations <= 2);
    }

    #[test]
    fn large_working_set_uses_reduced_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (h, _, lb, ub) = random_problem(&mut rng, 40);
        let g = DVector::repeat(40, -50.0);
        let s = qp_solve(&h, &g, &lb, &ub).unwrap();
        let oracle = projected_gradient(&h, &g, &lb, &ub);
        assert!((&s.x - &oracle).amax() < 1e-6);
    }

    #[test]
    fn rejects_indefinite_and_bad_bounds() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(BoxQp::new(h), Err(Error::NotPositiveDefinite(_))));
        let h = DMatrix::identity(2, 2);
        let bad = qp_solve(
            &h,
            &DVector::zeros(2),
            &DVector::repeat(2, 1.0),
            &DVector::zeros(2),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn fixed_variables_stay_fixed() {
        let h = DMatrix::identity(3, 3);
        let g = DVector::from_vec(vec![1.0, -1.0, 0.0]);
        let lb = DVector::from_vec(vec![0.3, -1.0, -1.0]);
        let ub = DVector::from_vec(vec![0.3, 1.0, 1.0]);
        let s = qp_solve(&h, &g, &lb, &ub).unwrap();
        assert_eq!(s.x[0], 0.3);
        assert!((s.x[1] - 1.0).abs() < 1e-14);
    }
}

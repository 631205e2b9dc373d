use nalgebra::{DMatrix, DVector, Matrix2x4, Matrix4, Matrix4x2, Vector2};

use super::mpc::{
    extend_horizon, move_gradient, move_penalty, stack, tracking_objective, weight_stacked,
    weighted_gram, MpcConfig, OcpSolution,
};
use super::qp::BoxQp;
use crate::dynamics::{
    cv_matrix, propagate, propagate_with_sensitivities, Disturbance, Input, Mass,
};
use crate::error::Result;
use crate::estimation::{GaussianBelief, AUG};
use crate::params::ModelParams;

/// RK4 substeps per shooting interval.
pub const SHOOTING_SUBSTEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqpOptions {
    pub max_iterations: usize,
    /// Converged when the accepted input step (∞-norm, cm³/s) is below this.
    pub step_tol: f64,
    pub armijo: f64,
    pub backtrack: f64,
    /// Fraction of the quadratic model decrease the penalty must leave.
    pub penalty_rho: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            step_tol: 1e-6,
            armijo: 1e-4,
            backtrack: 0.5,
            penalty_rho: 0.5,
        }
    }
}

/// Nonlinear MPC by direct multiple shooting. Each SQP iteration linearizes
/// the shooting intervals, condenses the continuity constraints into a QP over
/// the inputs and globalizes with an ℓ1 merit line search.
#[derive(Debug, Clone)]
pub struct Nmpc {
    cfg: MpcConfig,
    params: ModelParams,
    opts: SqpOptions,
    cz: Matrix2x4<f64>,
    move_h: DMatrix<f64>,
    warm: Option<(Vec<Mass>, Vec<Input>)>,
}

struct Linearization {
    defects: Vec<Mass>,
    a: Vec<Matrix4<f64>>,
    b: Vec<Matrix4x2<f64>>,
}

impl Nmpc {
    pub fn new(params: ModelParams, cfg: MpcConfig) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        Ok(Self {
            cz: cv_matrix(&params),
            move_h: move_penalty(&cfg.s, cfg.horizon),
            cfg,
            params,
            opts: SqpOptions::default(),
            warm: None,
        })
    }

    pub fn with_options(mut self, opts: SqpOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    fn shoot(&self, m: &Mass, u: &Input, d: &Disturbance) -> Option<Mass> {
        propagate(m, u, d, &self.params, self.cfg.ts, SHOOTING_SUBSTEPS).ok()
    }

    fn linearize(&self, x0: &Mass, s: &[Mass], u: &[Input], d: &Disturbance) -> Linearization {
        let n = u.len();
        let mut out = Linearization {
            defects: Vec::with_capacity(n),
            a: Vec::with_capacity(n),
            b: Vec::with_capacity(n),
        };
        for k in 0..n {
            let start = if k == 0 { x0 } else { &s[k - 1] };
            let (phi, a, b) = propagate_with_sensitivities(
                start,
                &u[k],
                d,
                &self.params,
                self.cfg.ts,
                SHOOTING_SUBSTEPS,
            );
            out.defects.push(phi - s[k]);
            out.a.push(a);
            out.b.push(b);
        }
        out
    }

    fn cvs(&self, s: &[Mass]) -> Vec<Vector2<f64>> {
        s.iter().map(|m| self.cz * m).collect()
    }

    /// `(J, Σ‖c_k‖₁)` at a trial point; `None` if integration failed.
    fn merit_parts(
        &self,
        x0: &Mass,
        s: &[Mass],
        u: &[Input],
        d: &Disturbance,
        zbar: &[Vector2<f64>],
        u_prev: &Input,
    ) -> Option<(f64, f64)> {
        let mut infeasibility = 0.0;
        for k in 0..u.len() {
            let start = if k == 0 { x0 } else { &s[k - 1] };
            let phi = self.shoot(start, &u[k], d)?;
            infeasibility += (phi - s[k]).lp_norm(1);
        }
        let j = tracking_objective(&self.cfg, &self.cvs(s), zbar, u, u_prev);
        j.is_finite().then_some((j, infeasibility))
    }

    fn initial_guess(&self, x0: &Mass, d: &Disturbance, u_prev: &Input) -> (Vec<Mass>, Vec<Input>) {
        let n = self.cfg.horizon;
        match &self.warm {
            Some((s, u)) if u.len() == n => {
                let mut u_next: Vec<Input> = u[1..].to_vec();
                u_next.push(u[n - 1]);
                let mut s_next: Vec<Mass> = s[1..].to_vec();
                s_next.push(self.shoot(&s[n - 1], &u[n - 1], d).unwrap_or(s[n - 1]));
                (s_next, u_next)
            }
            _ => {
                let u0 = self.cfg.clamp(u_prev);
                let mut s = Vec::with_capacity(n);
                let mut m = *x0;
                for _ in 0..n {
                    m = self.shoot(&m, &u0, d).unwrap_or(m);
                    s.push(m);
                }
                (s, vec![u0; n])
            }
        }
    }

    /// One receding-horizon step from an absolute augmented belief.
    pub fn step(
        &mut self,
        belief: &GaussianBelief<AUG>,
        zbar: &[Vector2<f64>],
        u_prev: &Input,
    ) -> Result<(Input, OcpSolution)> {
        let n = self.cfg.horizon;
        let zbar = extend_horizon(zbar, n)?;
        let x0: Mass = belief.mean.fixed_rows::<4>(0).into();
        let d: Disturbance = belief.mean.fixed_rows::<4>(4).into();
        let (mut s, mut u) = self.initial_guess(&x0, &d, u_prev);
        let (lo, hi) = self.cfg.bounds;

        let mut mu = 0.0;
        let mut merit_steps = Vec::new();
        let mut iterations = 0;
        let mut kkt_residual = f64::NAN;
        let mut converged = false;
        while iterations < self.opts.max_iterations {
            iterations += 1;
            let lin = self.linearize(&x0, &s, &u, &d);

            // State offsets from the defects: e_{k+1} = A_k e_k + c_k.
            let mut offsets = Vec::with_capacity(n);
            let mut e = Mass::zeros();
            for k in 0..n {
                e = lin.a[k] * e + lin.defects[k];
                offsets.push(e);
            }
            // ∂z_{k+1}/∂u_j.
            let mut g_mat = DMatrix::zeros(2 * n, 2 * n);
            for j in 0..n {
                let mut sens = lin.b[j];
                for k in j..n {
                    if k > j {
                        sens = lin.a[k] * sens;
                    }
                    g_mat
                        .view_mut((2 * k, 2 * j), (2, 2))
                        .copy_from(&(self.cz * sens));
                }
            }
            let z = self.cvs(&s);
            let residual = DVector::from_iterator(
                2 * n,
                (0..n).flat_map(|k| {
                    let r = z[k] + self.cz * offsets[k] - zbar[k];
                    [r[0], r[1]]
                }),
            );
            let h = weighted_gram(&g_mat, &self.cfg.q) + &self.move_h;
            let grad = g_mat.tr_mul(&weight_stacked(&residual, &self.cfg.q))
                + move_gradient(&self.cfg.s, &u, u_prev);
            let u_stacked = stack(&u);
            let lb = u_stacked.map(|v| lo - v);
            let ub = u_stacked.map(|v| hi - v);
            let mut qp = BoxQp::new(h)?;
            let sol = qp.solve(&grad, &lb, &ub, Some(&DVector::zeros(2 * n)))?;
            kkt_residual = sol.diagnostics.kkt_residual;
            let du: Vec<Input> = (0..n)
                .map(|k| Input::new(sol.x[2 * k], sol.x[2 * k + 1]))
                .collect();

            let mut ds = Vec::with_capacity(n);
            let mut delta = Mass::zeros();
            for k in 0..n {
                delta = lin.a[k] * delta + lin.b[k] * du[k] + lin.defects[k];
                ds.push(delta);
            }

            // Directional derivative and curvature of J along the step.
            let move_grad = move_gradient(&self.cfg.s, &u, u_prev);
            let mut slope = 2.0 * move_grad.dot(&sol.x);
            let mut curvature = 2.0 * sol.x.dot(&(&self.move_h * &sol.x));
            for k in 0..n {
                let dz = self.cz * ds[k];
                slope += 2.0 * (z[k] - zbar[k]).dot(&(self.cfg.q * dz));
                curvature += 2.0 * dz.dot(&(self.cfg.q * dz));
            }
            let infeasibility: f64 = lin.defects.iter().map(|c| c.lp_norm(1)).sum();
            if infeasibility > 0.0 {
                let required =
                    (slope + 0.5 * curvature) / ((1.0 - self.opts.penalty_rho) * infeasibility);
                if mu < required {
                    mu = required + 1.0;
                }
            }
            let j0 = tracking_objective(&self.cfg, &z, &zbar, &u, u_prev);
            let phi0 = j0 + mu * infeasibility;
            let dphi = slope - mu * infeasibility;

            let step_size = sol
                .x
                .amax()
                .max(ds.iter().map(|v| v.amax()).fold(0.0, f64::max));
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha * step_size > 1e-14 {
                let s_try: Vec<Mass> = s.iter().zip(&ds).map(|(a, b)| a + b * alpha).collect();
                let u_try: Vec<Input> = u
                    .iter()
                    .zip(&du)
                    .map(|(a, b)| self.cfg.clamp(&(a + b * alpha)))
                    .collect();
                if let Some((j, c)) = self.merit_parts(&x0, &s_try, &u_try, &d, &zbar, u_prev) {
                    let phi = j + mu * c;
                    if phi <= phi0 + self.opts.armijo * alpha * dphi.min(0.0) {
                        accepted = Some((s_try, u_try, phi));
                        break;
                    }
                }
                alpha *= self.opts.backtrack;
            }
            match accepted {
                Some((s_new, u_new, phi)) => {
                    s = s_new;
                    u = u_new;
                    merit_steps.push((phi0, phi));
                    if alpha * sol.x.amax() < self.opts.step_tol {
                        converged = true;
                        break;
                    }
                }
                None => {
                    // No decrease is resolvable at working precision.
                    converged =
                        sol.x.amax() < self.opts.step_tol || -dphi <= 1e-12 * (1.0 + phi0.abs());
                    break;
                }
            }
        }

        let predicted_z = self.cvs(&s);
        let objective = tracking_objective(&self.cfg, &predicted_z, &zbar, &u, u_prev);
        let u0 = self.cfg.clamp(&u[0]);
        self.warm = Some((s, u.clone()));
        Ok((
            u0,
            OcpSolution {
                inputs: u,
                predicted_z,
                objective,
                iterations,
                kkt_residual,
                converged,
                merit_steps,
            },
        ))
    }
}

use nalgebra::{DMatrix, DVector, Matrix4, Vector2};

use super::mpc::{
    extend_horizon, move_gradient, move_penalty, stack, tracking_objective, unstack,
    weight_stacked, weighted_gram, MpcConfig, OcpSolution,
};
use super::qp::BoxQp;
use super::zoh::{zoh_discretize, DiscreteModel};
use crate::dynamics::{Input, LinearModel, Mass};
use crate::error::Result;
use crate::estimation::{GaussianBelief, AUG};

/// Linear MPC on the ZOH-discretized deviation model, condensed into a dense
/// box-constrained QP over the stacked inputs. The Hessian does not depend on
/// the data and is factored once.
#[derive(Debug, Clone)]
pub struct Lmpc {
    cfg: MpcConfig,
    lin: LinearModel,
    model: DiscreteModel,
    /// `∂Z/∂U`, block `(k, j) = C_z A_d^{k−j} B_d` for `j ≤ k`.
    gamma: DMatrix<f64>,
    /// `∂Z/∂x₀`.
    phi_x: DMatrix<f64>,
    /// `∂Z/∂d̂` with `d̂` held over the horizon.
    phi_d: DMatrix<f64>,
    qp: BoxQp,
    warm: Option<Vec<Input>>,
}

impl Lmpc {
    pub fn new(lin: &LinearModel, cfg: MpcConfig) -> Result<Self> {
        cfg.validate()?;
        let model = zoh_discretize(lin, cfg.ts)?;
        let n = cfg.horizon;
        let cz = lin.cz;

        // Markov parameters and free responses.
        let mut powers = Vec::with_capacity(n + 1);
        powers.push(Matrix4::identity());
        for k in 0..n {
            powers.push(model.ad * powers[k]);
        }
        let mut gamma = DMatrix::zeros(2 * n, 2 * n);
        let mut phi_x = DMatrix::zeros(2 * n, 4);
        let mut phi_d = DMatrix::zeros(2 * n, 4);
        let markov: Vec<_> = (0..n).map(|i| cz * powers[i] * model.bd).collect();
        let mut sum_ed = Matrix4::zeros();
        for k in 0..n {
            for j in 0..=k {
                gamma
                    .view_mut((2 * k, 2 * j), (2, 2))
                    .copy_from(&markov[k - j]);
            }
            phi_x
                .view_mut((2 * k, 0), (2, 4))
                .copy_from(&(cz * powers[k + 1]));
            sum_ed += powers[k] * model.ed;
            phi_d.view_mut((2 * k, 0), (2, 4)).copy_from(&(cz * sum_ed));
        }
        let h = weighted_gram(&gamma, &cfg.q) + move_penalty(&cfg.s, n);
        let qp = BoxQp::new(h)?;
        Ok(Self {
            cfg,
            lin: lin.clone(),
            model,
            gamma,
            phi_x,
            phi_d,
            qp,
            warm: None,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn discrete_model(&self) -> &DiscreteModel {
        &self.model
    }

    pub fn linear_model(&self) -> &LinearModel {
        &self.lin
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    fn deviation_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let n = 2 * self.cfg.horizon;
        let (lo, hi) = self.cfg.bounds;
        let us = self.lin.u_s;
        (
            DVector::from_fn(n, |i, _| lo - us[i % 2]),
            DVector::from_fn(n, |i, _| hi - us[i % 2]),
        )
    }

    fn free_response(&self, x_dev: &Mass, d_hat: &nalgebra::Vector4<f64>) -> DVector<f64> {
        let zs = self.lin.z_s();
        let mut f = &self.phi_x * DVector::from_column_slice(x_dev.as_slice())
            + &self.phi_d * DVector::from_column_slice(d_hat.as_slice());
        for k in 0..self.cfg.horizon {
            f[2 * k] += zs[0];
            f[2 * k + 1] += zs[1];
        }
        f
    }

    /// Hessian, gradient and bounds of the condensed QP in deviation inputs.
    pub fn condensed_qp(
        &self,
        belief: &GaussianBelief<AUG>,
        zbar: &[Vector2<f64>],
        u_prev: &Input,
    ) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
        let g = self.gradient(belief, zbar, u_prev)?;
        let (lb, ub) = self.deviation_bounds();
        Ok((self.qp.hessian().clone(), g, lb, ub))
    }

    fn gradient(
        &self,
        belief: &GaussianBelief<AUG>,
        zbar: &[Vector2<f64>],
        u_prev: &Input,
    ) -> Result<DVector<f64>> {
        let n = self.cfg.horizon;
        let zbar = extend_horizon(zbar, n)?;
        let x_dev: Mass = belief.mean.fixed_rows::<4>(0).into();
        let d_hat = belief.mean.fixed_rows::<4>(4).into();
        let residual = self.free_response(&x_dev, &d_hat) - stack(&zbar);
        let du_prev = u_prev - self.lin.u_s;
        let zeros = vec![Input::zeros(); n];
        Ok(self.gamma.tr_mul(&weight_stacked(&residual, &self.cfg.q))
            + move_gradient(&self.cfg.s, &zeros, &du_prev))
    }

    /// One receding-horizon step. `belief` holds deviations from the model's
    /// operating point; setpoints and inputs are absolute.
    pub fn step(
        &mut self,
        belief: &GaussianBelief<AUG>,
        zbar: &[Vector2<f64>],
        u_prev: &Input,
    ) -> Result<(Input, OcpSolution)> {
        let n = self.cfg.horizon;
        let zbar = extend_horizon(zbar, n)?;
        let g = self.gradient(belief, &zbar, u_prev)?;
        let (lb, ub) = self.deviation_bounds();
        let us = self.lin.u_s;
        let warm = self.warm.as_ref().map(|w| {
            let mut shifted: Vec<Input> = w[1..].iter().map(|u| u - us).collect();
            shifted.push(w[w.len() - 1] - us);
            stack(&shifted)
        });
        let sol = self.qp.solve(&g, &lb, &ub, warm.as_ref())?;

        let inputs: Vec<Input> = unstack(&sol.x)
            .iter()
            .map(|du| self.cfg.clamp(&(du + us)))
            .collect();
        let x_dev: Mass = belief.mean.fixed_rows::<4>(0).into();
        let d_hat = belief.mean.fixed_rows::<4>(4).into();
        let z = self.free_response(&x_dev, &d_hat) + &self.gamma * &sol.x;
        let predicted_z: Vec<Vector2<f64>> = (0..n)
            .map(|k| Vector2::new(z[2 * k], z[2 * k + 1]))
            .collect();
        let objective = tracking_objective(&self.cfg, &predicted_z, &zbar, &inputs, u_prev);
        self.warm = Some(inputs.clone());
        let u0 = inputs[0];
        Ok((
            u0,
            OcpSolution {
                inputs,
                predicted_z,
                objective,
                iterations: sol.diagnostics.iterations,
                kkt_residual: sol.diagnostics.kkt_residual,
                converged: true,
                merit_steps: Vec::new(),
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Disturbance;
    use crate::estimation::AugVector;
    use crate::params::ModelParams;

    fn controller(cfg: MpcConfig) -> Lmpc {
        let p = ModelParams::estimated();
        let lin =
            LinearModel::at_steady_state(&Input::new(300.0, 300.0), &Disturbance::zeros(), &p)
                .unwrap();
        Lmpc::new(&lin, cfg).unwrap()
    }

    fn zero_belief() -> GaussianBelief<AUG> {
        GaussianBelief::new(
            AugVector::zeros(),
            nalgebra::SMatrix::<f64, AUG, AUG>::identity(),
        )
    }

    #[test]
    fn operating_point_is_stationary() {
        let mut c = controller(MpcConfig {
            horizon: 40,
            ..Default::default()
        });
        let zs = c.linear_model().z_s();
        let (u, sol) = c
            .step(&zero_belief(), &[zs], &Input::new(300.0, 300.0))
            .unwrap();
        assert!((u - Input::new(300.0, 300.0)).amax() < 1e-9);
        assert!(sol.objective < 1e-12);
    }

    #[test]
    fn heavy_move_weight_freezes_input() {
        let s = nalgebra::Matrix2::identity() * 1e9;
        let mut c = controller(MpcConfig {
            horizon: 40,
            s,
            ..Default::default()
        });
        let zs = c.linear_model().z_s();
        let prev = Input::new(290.0, 310.0);
        let (u, _) = c
            .step(&zero_belief(), &[zs + Vector2::new(3.0, -2.0)], &prev)
            .unwrap();
        assert!((u - prev).norm() < 1e-3, "{u}");
    }

    #[test]
    fn plan_respects_bounds_and_tracks() {
        let mut c = controller(MpcConfig {
            horizon: 60,
            ..Default::default()
        });
        let zs = c.linear_model().z_s();
        let (_, sol) = c
            .step(
                &zero_belief(),
                &[zs + Vector2::new(2.0, 0.0)],
                &Input::new(300.0, 300.0),
            )
            .unwrap();
        assert!(sol
            .inputs
            .iter()
            .all(|u| u.iter().all(|v| (160.0..=350.0).contains(v))));
        let last = sol.predicted_z.last().unwrap();
        assert!(
            (last - (zs + Vector2::new(2.0, 0.0))).amax() < 0.5,
            "{last}"
        );
        assert!(sol.kkt_residual < 1e-8);
    }

    #[test]
    fn solution_is_a_projected_gradient_fixed_point() {
        let mut c = controller(MpcConfig {
            horizon: 30,
            ..Default::default()
        });
        let zs = c.linear_model().z_s();
        let mut b = zero_belief();
        b.mean[0] = 300.0;
        b.mean[5] = 4.0;
        let zbar = [zs + Vector2::new(10.0, -6.0)];
        let prev = Input::new(320.0, 280.0);
        let (h, g, lb, ub) = c.condensed_qp(&b, &zbar, &prev).unwrap();
        let (_, sol) = c.step(&b, &zbar, &prev).unwrap();
        let x = stack(
            &sol.inputs
                .iter()
                .map(|u| u - c.linear_model().u_s)
                .collect::<Vec<_>>(),
        );
        let l = h.clone().symmetric_eigenvalues().max();
        let step = &x - (&h * &x + &g) / l;
        let projected = DVector::from_fn(x.len(), |i, _| step[i].clamp(lb[i], ub[i]));
        assert!((projected - &x).amax() < 1e-8);
    }
}

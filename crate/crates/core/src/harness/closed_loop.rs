use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::record::{RunMeta, RunRecord, RunRow};
use super::schedule::SetpointSchedule;
use crate::control::{imc_tune, pid_step, Lmpc, MpcConfig, Nmpc, PidGains, PidLoopState};
use crate::dynamics::{steady_state, Disturbance, Input, LinearModel, Mass};
use crate::error::{Error, Result};
use crate::estimation::{
    measurement_update, time_update, AugVector, AugmentedModel, GaussianBelief, InitialCovariance,
    LinearAugmentedModel, AUG, TIME_UPDATE_STEPS,
};
use crate::params::ModelParams;
use crate::plant::{NoiseMode, Plant, DEFAULT_SUBSTEPS};
use crate::tf::transfer_functions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Pid,
    Lmpc,
    Nmpc,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [
        ControllerKind::Pid,
        ControllerKind::Lmpc,
        ControllerKind::Nmpc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Pid => "pid",
            ControllerKind::Lmpc => "lmpc",
            ControllerKind::Nmpc => "nmpc",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown controller `{s}` (expected pid, lmpc or nmpc)"
                ))
            })
    }
}

/// Everything a closed-loop run needs besides the controller choice and the
/// setpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopConfig {
    /// Parameters of the simulated plant.
    pub plant: ModelParams,
    /// Parameters and noise tuning used by estimators and controllers.
    pub model: ModelParams,
    pub plant_label: String,
    pub model_label: String,
    pub ts: f64,
    pub duration: f64,
    /// Operating point; PID bias and linearization point.
    pub u_s: Input,
    pub bounds: (f64, f64),
    pub seed: u64,
    pub noise: NoiseMode,
    /// Constant inflow added to the plant and unknown to the controllers.
    pub disturbance: Disturbance,
    pub substeps: usize,
    pub tc: f64,
    /// Move and tracking weights and horizon; `ts` and `bounds` are taken from
    /// this struct.
    pub mpc: MpcConfig,
    pub p0: InitialCovariance,
    /// Initial plant masses; defaults to the steady state of `u_s`.
    pub x0: Option<Mass>,
}

impl ClosedLoopConfig {
    pub fn new(plant: ModelParams, model: ModelParams, seed: u64) -> Self {
        let mpc = MpcConfig::default();
        Self {
            plant,
            model,
            plant_label: "custom".into(),
            model_label: "custom".into(),
            ts: mpc.ts,
            duration: 600.0,
            u_s: Input::new(300.0, 300.0),
            bounds: mpc.bounds,
            seed,
            noise: NoiseMode::FULL,
            disturbance: Disturbance::zeros(),
            substeps: DEFAULT_SUBSTEPS,
            tc: 50.0,
            mpc,
            p0: InitialCovariance::default(),
            x0: None,
        }
    }

    pub fn samples(&self) -> usize {
        (self.duration / self.ts).round() as usize + 1
    }

    fn mpc_config(&self) -> MpcConfig {
        MpcConfig {
            ts: self.ts,
            bounds: self.bounds,
            ..self.mpc
        }
    }

    /// PID gains for the pairings `y₁ → u₂` and `y₂ → u₁`, from the model
    /// linearized at `u_s`.
    pub fn pid_gains(&self) -> Result<[PidGains; 2]> {
        let lin = LinearModel::at_steady_state(&self.u_s, &Disturbance::zeros(), &self.model)?;
        let tfm = transfer_functions(&lin)?;
        Ok([
            imc_tune(&tfm.g12()?, self.tc)?.with_bias(self.u_s[1]),
            imc_tune(&tfm.g21()?, self.tc)?.with_bias(self.u_s[0]),
        ])
    }
}

enum Estimator {
    Ekf {
        model: AugmentedModel,
        belief: GaussianBelief<AUG>,
    },
    Kf {
        model: LinearAugmentedModel,
        belief: GaussianBelief<AUG>,
    },
}

impl Estimator {
    fn update(&mut self, y: &Vector4<f64>) -> Result<()> {
        match self {
            Estimator::Ekf { model, belief } => *belief = measurement_update(model, belief, y)?.0,
            Estimator::Kf { model, belief } => {
                let y_dev = y - model.linear_model().y_s();
                *belief = measurement_update(model, belief, &y_dev)?.0;
            }
        }
        Ok(())
    }

    fn predict(&mut self, u: &Input, ts: f64) -> Result<()> {
        match self {
            Estimator::Ekf { model, belief } => {
                *belief = time_update(model, belief, u, ts, TIME_UPDATE_STEPS)?
            }
            Estimator::Kf { model, belief } => {
                let u_dev = u - model.linear_model().u_s;
                *belief = time_update(model, belief, &u_dev, ts, TIME_UPDATE_STEPS)?;
            }
        }
        Ok(())
    }

    /// Absolute masses and disturbances.
    fn estimate(&self) -> (Mass, Disturbance) {
        match self {
            Estimator::Ekf { belief, .. } => (
                belief.mean.fixed_rows::<4>(0).into(),
                belief.mean.fixed_rows::<4>(4).into(),
            ),
            Estimator::Kf { model, belief } => {
                let lin = model.linear_model();
                (
                    lin.x_s + belief.mean.fixed_rows::<4>(0),
                    lin.d_s + belief.mean.fixed_rows::<4>(4),
                )
            }
        }
    }

    fn belief(&self) -> &GaussianBelief<AUG> {
        match self {
            Estimator::Ekf { belief, .. } | Estimator::Kf { belief, .. } => belief,
        }
    }
}

enum Law {
    Pid {
        gains: [PidGains; 2],
        state: [PidLoopState; 2],
    },
    Lmpc(Box<Lmpc>),
    Nmpc(Box<Nmpc>),
}

/// Simulates plant, estimator and controller in closed loop. A failure after
/// setup stops the run; the rows logged so far are returned with
/// `meta.failure` set.
pub fn run_closed_loop(
    cfg: &ClosedLoopConfig,
    kind: ControllerKind,
    schedule: &SetpointSchedule,
) -> Result<RunRecord> {
    cfg.plant.validate()?;
    cfg.model.validate()?;
    if !(cfg.ts > 0.0) || !(cfg.duration >= 0.0) || cfg.substeps == 0 {
        return Err(Error::Config(
            "ts, duration and substeps must be positive".into(),
        ));
    }
    let mpc = cfg.mpc_config();
    mpc.validate()?;

    let x0 = match cfg.x0 {
        Some(x) => x,
        None => steady_state(&cfg.u_s, &Disturbance::zeros(), &cfg.plant)?.m,
    };
    let mut plant = Plant::new(x0, cfg.plant, cfg.substeps, cfg.noise, cfg.seed)?;

    let lin = LinearModel::at_steady_state(&cfg.u_s, &Disturbance::zeros(), &cfg.model)?;
    let p0 = cfg.p0.matrix();
    let mut estimator = match kind {
        ControllerKind::Lmpc => Estimator::Kf {
            model: LinearAugmentedModel::new(&lin, &cfg.model),
            belief: GaussianBelief::new(AugVector::zeros(), p0),
        },
        ControllerKind::Pid | ControllerKind::Nmpc => {
            let mut mean = AugVector::zeros();
            mean.fixed_rows_mut::<4>(0).copy_from(&lin.x_s);
            Estimator::Ekf {
                model: AugmentedModel::new(&cfg.model),
                belief: GaussianBelief::new(mean, p0),
            }
        }
    };
    let mut law = match kind {
        ControllerKind::Pid => Law::Pid {
            gains: cfg.pid_gains()?,
            state: [PidLoopState::default(); 2],
        },
        ControllerKind::Lmpc => Law::Lmpc(Box::new(Lmpc::new(&lin, mpc)?)),
        ControllerKind::Nmpc => Law::Nmpc(Box::new(Nmpc::new(cfg.model, mpc)?)),
    };

    let mut record = RunRecord {
        meta: RunMeta {
            controller: kind.name().into(),
            plant: cfg.plant_label.clone(),
            model: cfg.model_label.clone(),
            seed: cfg.seed,
            ts: cfg.ts,
            duration: cfg.duration,
            bounds: [cfg.bounds.0, cfg.bounds.1],
            failure: None,
        },
        rows: Vec::with_capacity(cfg.samples()),
    };

    let mut u_prev = cfg.u_s;
    let samples = cfg.samples();
    for k in 0..samples {
        let t = k as f64 * cfg.ts;
        let step = (|| -> Result<RunRow> {
            let y = plant.measure();
            estimator.update(&y)?;
            let zbar = schedule.at(t);
            let u = match &mut law {
                Law::Pid { gains, state } => {
                    let (u2, s0) =
                        pid_step(&state[0], y[0], zbar[0], &gains[0], cfg.ts, cfg.bounds);
                    let (u1, s1) =
                        pid_step(&state[1], y[1], zbar[1], &gains[1], cfg.ts, cfg.bounds);
                    *state = [s0, s1];
                    Input::new(u1, u2)
                }
                Law::Lmpc(c) => {
                    c.step(
                        estimator.belief(),
                        &schedule.preview(t, cfg.ts, mpc.horizon),
                        &u_prev,
                    )?
                    .0
                }
                Law::Nmpc(c) => {
                    c.step(
                        estimator.belief(),
                        &schedule.preview(t, cfg.ts, mpc.horizon),
                        &u_prev,
                    )?
                    .0
                }
            };
            let u = u.map(|v| v.clamp(cfg.bounds.0, cfg.bounds.1));
            let (xhat, dhat) = estimator.estimate();
            if !xhat.iter().chain(dhat.iter()).all(|v| v.is_finite()) {
                return Err(Error::FilterDivergence { sample: k });
            }
            Ok(RunRow {
                t,
                zbar,
                y,
                u,
                xhat,
                dhat,
            })
        })();
        let row = match step {
            Ok(row) => row,
            Err(e) => {
                record.meta.failure = Some(format!("sample {k}: {e}"));
                return Ok(record);
            }
        };
        record.rows.push(row);
        u_prev = row.u;
        if k + 1 < samples {
            plant.advance(&row.u, &cfg.disturbance, cfg.ts);
            if let Err(e) = estimator.predict(&row.u, cfg.ts) {
                record.meta.failure = Some(format!("sample {k}: {e}"));
                return Ok(record);
            }
        }
    }
    Ok(record)
}

/// CV levels at the steady state of `u` under `params`.
pub fn steady_cvs(u: &Input, params: &ModelParams) -> Result<Vector2<f64>> {
    let m = steady_state(u, &Disturbance::zeros(), params)?.m;
    Ok(crate::dynamics::cv_output(&m, params))
}

//! Run configuration: one TOML document drives every command.
//!
//! ```toml
//! version = 1
//! seed = 42
//! plant = "estimated"
//! model = "filter-tuning"
//!
//! [experiment]
//! duration = 4200.0
//! noise = "full"
//!
//! [mpc]
//! q = [10.0, 10.0]
//! horizon = 160
//! ```
//!
//! Every table and key is optional except `seed`, which may instead come
//! from the command line.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::control::MpcConfig;
use crate::dynamics::{Disturbance, Input};
use crate::error::{Error, Result};
use crate::estimation::InitialCovariance;
use crate::harness::{steady_cvs, Breakpoint, ClosedLoopConfig, SetpointSchedule, BENCHMARK_STEPS};
use crate::params::ModelParams;
use crate::plant::{NoiseMode, DEFAULT_SUBSTEPS};
use crate::sysid::{EstimationOptions, Excitation, Param};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "version")]
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Preset name or parameter file of the simulated plant.
    #[serde(default = "plant_default")]
    pub plant: String,
    /// Preset name or parameter file used by estimators and controllers.
    #[serde(default = "model_default")]
    pub model: String,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub pid: PidConfig,
    #[serde(default)]
    pub mpc: MpcSection,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub excitation: ExcitationConfig,
    #[serde(default)]
    pub estimation: EstimationConfig,
}

fn version() -> u32 {
    CONFIG_VERSION
}

fn plant_default() -> String {
    "estimated".into()
}

fn model_default() -> String {
    "filter-tuning".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSetting {
    #[default]
    Full,
    Measurement,
    None,
}

impl From<NoiseSetting> for NoiseMode {
    fn from(n: NoiseSetting) -> Self {
        match n {
            NoiseSetting::Full => NoiseMode::FULL,
            NoiseSetting::Measurement => NoiseMode::MEASUREMENT_ONLY,
            NoiseSetting::None => NoiseMode::NONE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub ts: f64,
    pub duration: f64,
    pub u_s: [f64; 2],
    pub bounds: [f64; 2],
    /// Constant inflow added to the plant only, cm³/s.
    pub disturbance: [f64; 4],
    pub noise: NoiseSetting,
    pub substeps: usize,
    /// Explicit setpoints; the benchmark schedule is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub setpoints: Option<Vec<Breakpoint>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ts: 5.0,
            duration: crate::harness::BENCHMARK_DURATION,
            u_s: [300.0, 300.0],
            bounds: [160.0, 350.0],
            disturbance: [0.0; 4],
            noise: NoiseSetting::Full,
            substeps: DEFAULT_SUBSTEPS,
            setpoints: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidConfig {
    pub tc: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self { tc: 50.0 }
    }
}

/// Diagonal MPC weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcSection {
    pub q: [f64; 2],
    pub s: [f64; 2],
    pub horizon: usize,
}

impl Default for MpcSection {
    fn default() -> Self {
        Self {
            q: [10.0, 10.0],
            s: [1.0, 1.0],
            horizon: 160,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub p0_mass: f64,
    pub p0_disturbance: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let p = InitialCovariance::default();
        Self {
            p0_mass: p.mass,
            p0_disturbance: p.disturbance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcitationConfig {
    pub ts: f64,
    pub duration: f64,
    pub hold: [usize; 2],
    pub level: [f64; 2],
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        let e = Excitation::default();
        Self {
            ts: e.ts,
            duration: e.duration,
            hold: [e.hold.0, e.hold.1],
            level: [e.level.0, e.level.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationConfig {
    /// Preset name or parameter file of the initial guess.
    pub initial: String,
    /// Parameter names or groups (`a`, `A`, `gamma`, `sigma`, `a3`, …).
    pub free: Vec<String>,
    pub starts: usize,
    pub max_evals: usize,
    pub tolerance: f64,
    /// Fraction of a single dataset used for estimation when no separate
    /// validation file is given.
    pub split: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        let o = EstimationOptions::default();
        Self {
            initial: "nominal".into(),
            free: ["a", "gamma", "sigma"].map(String::from).to_vec(),
            starts: o.starts,
            max_evals: o.nelder_mead.max_evals,
            tolerance: o.nelder_mead.diameter_tol,
            split: 0.5,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: None,
            out: None,
            plant: plant_default(),
            model: model_default(),
            experiment: ExperimentConfig::default(),
            pid: PidConfig::default(),
            mpc: MpcSection::default(),
            filter: FilterConfig::default(),
            excitation: ExcitationConfig::default(),
            estimation: EstimationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    /// The seed; there is deliberately no fallback.
    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (set `seed` or pass --seed)".into()))
    }

    pub fn plant_params(&self) -> Result<ModelParams> {
        ModelParams::resolve(&self.plant)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::resolve(&self.model)
    }

    pub fn excitation(&self) -> Excitation {
        let e = &self.excitation;
        Excitation {
            ts: e.ts,
            duration: e.duration,
            hold: (e.hold[0], e.hold[1]),
            level: (e.level[0], e.level[1]),
        }
    }

    pub fn free_parameters(&self) -> Result<Vec<Param>> {
        let mut out: Vec<Param> = Vec::new();
        for name in &self.estimation.free {
            for p in Param::parse_group(name)? {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        Ok(out)
    }

    pub fn estimation_options(&self) -> Result<EstimationOptions> {
        let mut o = EstimationOptions {
            seed: self.seed()?,
            starts: self.estimation.starts,
            ..Default::default()
        };
        o.nelder_mead.max_evals = self.estimation.max_evals;
        o.nelder_mead.diameter_tol = self.estimation.tolerance;
        Ok(o)
    }

    /// Closed-loop settings and the setpoint schedule.
    pub fn closed_loop(&self) -> Result<(ClosedLoopConfig, SetpointSchedule)> {
        let seed = self.seed()?;
        let ex = &self.experiment;
        let plant = self.plant_params()?;
        let model = self.model_params()?;
        let mut cfg = ClosedLoopConfig::new(plant, model, seed);
        cfg.plant_label = self.plant.clone();
        cfg.model_label = self.model.clone();
        cfg.ts = ex.ts;
        cfg.duration = ex.duration;
        cfg.u_s = Input::new(ex.u_s[0], ex.u_s[1]);
        cfg.bounds = (ex.bounds[0], ex.bounds[1]);
        cfg.disturbance = Disturbance::from(ex.disturbance);
        cfg.noise = ex.noise.into();
        cfg.substeps = ex.substeps;
        cfg.tc = self.pid.tc;
        cfg.mpc = MpcConfig {
            q: Matrix2::from_diagonal(&Vector2::from(self.mpc.q)),
            s: Matrix2::from_diagonal(&Vector2::from(self.mpc.s)),
            horizon: self.mpc.horizon,
            ts: ex.ts,
            bounds: cfg.bounds,
        };
        cfg.p0 = InitialCovariance {
            mass: self.filter.p0_mass,
            disturbance: self.filter.p0_disturbance,
        };

        let schedule = match &ex.setpoints {
            Some(points) => SetpointSchedule::new(points.clone())?,
            None => {
                let start = steady_cvs(&cfg.u_s, &cfg.plant)?;
                let mut zbar = [start[0], start[1]];
                let mut points = vec![Breakpoint { t: 0.0, zbar }];
                for (t, channel, level) in BENCHMARK_STEPS {
                    zbar[channel] = level;
                    points.push(Breakpoint { t, zbar });
                }
                SetpointSchedule::new(points)?
            }
        };
        Ok((cfg, schedule))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::benchmark_protocol;

    #[test]
    fn empty_document_uses_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(cfg.seed().is_err());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig {
            seed: Some(9),
            ..Default::default()
        };
        cfg.experiment.setpoints = Some(vec![Breakpoint {
            t: 0.0,
            zbar: [30.0, 31.0],
        }]);
        cfg.experiment.noise = NoiseSetting::Measurement;
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(RunConfig::from_toml("sede = 3").is_err());
        assert!(RunConfig::from_toml("version = 2").is_err());
        assert!(RunConfig::from_toml("[mpc]\nhorizont = 3").is_err());
    }

    #[test]
    fn default_run_matches_benchmark() {
        let cfg = RunConfig {
            seed: Some(4),
            ..Default::default()
        };
        let (loop_cfg, schedule) = cfg.closed_loop().unwrap();
        let bench = benchmark_protocol(4).unwrap();
        assert_eq!(schedule, bench.schedule);
        assert_eq!(loop_cfg.plant, bench.config.plant);
        assert_eq!(loop_cfg.model, bench.config.model);
        assert_eq!(loop_cfg.mpc, bench.config.mpc);
        assert_eq!(loop_cfg.samples(), bench.config.samples());
    }

    #[test]
    fn free_groups_expand_without_duplicates() {
        let mut cfg = RunConfig::default();
        cfg.estimation.free = vec!["a".into(), "a2".into(), "gamma".into()];
        assert_eq!(cfg.free_parameters().unwrap().len(), 6);
        cfg.estimation.free = vec!["rho".into()];
        assert!(cfg.free_parameters().is_err());
    }
}

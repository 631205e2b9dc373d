use super::closed_loop::{steady_cvs, ClosedLoopConfig};
use super::schedule::{Breakpoint, SetpointSchedule};
use crate::error::Result;
use crate::params::ModelParams;

/// Staggered setpoint changes as `(time s, channel, level cm)`, applied after
/// starting at the steady CVs of the operating point.
pub const BENCHMARK_STEPS: [(f64, usize, f64); 6] = [
    (600.0, 0, 30.0),
    (1200.0, 1, 30.0),
    (1800.0, 0, 40.0),
    (2400.0, 1, 40.0),
    (3000.0, 0, 35.0),
    (3600.0, 1, 35.0),
];

pub const BENCHMARK_DURATION: f64 = 4200.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub schedule: SetpointSchedule,
    pub config: ClosedLoopConfig,
}

/// The reference comparison experiment: identified parameters as plant truth,
/// the same geometry with the filter tuning as controller model, pumps around
/// 300 cm³/s within [160, 350], and staggered setpoint steps on both CVs.
pub fn benchmark_protocol(seed: u64) -> Result<Protocol> {
    let plant = ModelParams::estimated();
    let model = ModelParams::filter_tuning();
    let mut config = ClosedLoopConfig::new(plant, model, seed);
    config.plant_label = "estimated".into();
    config.model_label = "filter-tuning".into();
    config.duration = BENCHMARK_DURATION;
    let start = steady_cvs(&config.u_s, &config.plant)?;
    let mut zbar = [start[0], start[1]];
    let mut breakpoints = vec![Breakpoint { t: 0.0, zbar }];
    for (t, channel, level) in BENCHMARK_STEPS {
        zbar[channel] = level;
        breakpoints.push(Breakpoint { t, zbar });
    }
    Ok(Protocol {
        schedule: SetpointSchedule::new(breakpoints)?,
        config,
    })
}

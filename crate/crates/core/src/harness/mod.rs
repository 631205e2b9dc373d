//! Closed-loop experiments: plant simulation with an estimator and a
//! controller in the loop, setpoint schedules, logging and metrics.

mod closed_loop;
mod metrics;
mod protocol;
mod record;
mod schedule;

pub use closed_loop::{run_closed_loop, steady_cvs, ClosedLoopConfig, ControllerKind};
pub use metrics::{
    compare, compute_metrics, metrics_from, render_csv, render_text, ComparisonRow,
    PerformanceReport,
};
pub use protocol::{benchmark_protocol, Protocol, BENCHMARK_DURATION, BENCHMARK_STEPS};
pub use record::{RunMeta, RunRecord, RunRow, RECORD_HEADER};
pub use schedule::{Breakpoint, SetpointSchedule};

//! PID with IMC tuning, linear MPC and nonlinear MPC, and the box-constrained
//! QP solver they share.

mod lmpc;
mod mpc;
mod nmpc;
mod pid;
pub mod qp;
mod zoh;

pub use lmpc::Lmpc;
pub use mpc::{extend_horizon, tracking_objective, MpcConfig, OcpSolution};
pub use nmpc::{Nmpc, SqpOptions, SHOOTING_SUBSTEPS};
pub use pid::{imc_tune, pid_step, PidGains, PidLoopState, DERIVATIVE_FILTER};
pub use qp::{qp_solve, BoxQp, QpDiagnostics, QpSolution};
pub use zoh::{zoh, zoh_discretize, DiscreteModel};

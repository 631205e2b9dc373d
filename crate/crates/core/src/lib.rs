//! Simulation, estimation, identification and control of the quadruple-tank
//! process.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod ode;
pub mod params;
pub mod plant;
pub mod rng;
pub mod sysid;
pub mod tf;

pub use error::{Error, Result};
pub use params::ModelParams;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/model.md")]
    struct Model;
    #[doc = include_str!("../../../book/src/estimation.md")]
    struct Estimation;
    #[doc = include_str!("../../../book/src/identification.md")]
    struct Identification;
    #[doc = include_str!("../../../book/src/control.md")]
    struct Control;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}

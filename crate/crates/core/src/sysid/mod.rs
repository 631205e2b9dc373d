//! Maximum-likelihood prediction-error identification.
//!
//! The one-step predictions and their covariances come from the augmented
//! CD-EKF; the negative log-likelihood of the innovations is minimized over the
//! free parameters by a derivative-free simplex search.

mod dataset;
mod estimate;
mod excitation;
mod gof;
mod likelihood;
pub mod nelder_mead;

pub use dataset::{Dataset, DATASET_HEADER};
pub use estimate::{
    estimate_parameters, Diagnostics, Estimate, EstimationOptions, EstimationProblem, Param,
};
pub use excitation::{generate_excitation, run_lengths, Excitation};
pub use gof::goodness_of_fit;
pub use likelihood::{
    gaussian_nll, negative_log_likelihood, negative_log_likelihood_multi, FilterSetup, InitialMean,
    Likelihood,
};

use crate::dynamics::{levels_to_mass, steady_state, Disturbance, Levels};
use crate::error::Result;
use crate::params::ModelParams;
use crate::plant::{simulate_levels, simulate_plant, NoiseMode, DEFAULT_SUBSTEPS};

/// Simulates an open-loop experiment under `inputs` from the steady state of
/// the first input.
pub fn simulate_dataset(
    params: &ModelParams,
    inputs: &[crate::dynamics::Input],
    ts: f64,
    noise: NoiseMode,
    seed: u64,
) -> Result<Dataset> {
    let x0 = steady_state(&inputs[0], &Disturbance::zeros(), params)?.m;
    let traj = simulate_plant(
        x0,
        &inputs[..inputs.len() - 1],
        &[],
        params,
        ts,
        DEFAULT_SUBSTEPS,
        noise,
        seed,
    )?;
    Dataset::new(
        (0..inputs.len()).map(|k| k as f64 * ts).collect(),
        traj.iter().map(|s| s.y).collect(),
        inputs.to_vec(),
    )
}

/// Noise-free open-loop levels for the inputs of `data`, started from the
/// first measured levels.
pub fn open_loop_levels(params: &ModelParams, data: &Dataset) -> Result<Vec<Levels>> {
    let x0 = levels_to_mass(&data.y[0], params);
    simulate_levels(
        x0,
        &data.u[..data.len() - 1],
        params,
        data.sample_time(),
        DEFAULT_SUBSTEPS,
    )
}

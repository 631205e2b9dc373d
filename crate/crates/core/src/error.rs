use thiserror::Error;

/// Errors raised anywhere in the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no interior steady state: tank {tank} has inflow {inflow} cm^3/s")]
    NoSteadyState { tank: usize, inflow: f64 },

    #[error("singular linearization: tank {tank} is empty")]
    SingularLinearization { tank: usize },

    #[error("integration failure: non-finite state at step {step}")]
    Integration { step: usize },

    #[error("transfer function g{row}{col} is not of second-order cascade form: {reason}")]
    NotSecondOrder {
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("untunable loop: {0}")]
    Untunable(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("QP iteration limit {limit} exceeded")]
    QpIterationLimit {
        limit: usize,
        last: nalgebra::DVector<f64>,
    },

    #[error("filter diverged at sample {sample}")]
    FilterDivergence { sample: usize },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

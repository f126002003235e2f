use thiserror::Error;

/// Errors raised across the toolbox.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid target at row {row}: {message}")]
    InvalidTarget { row: usize, message: String },

    #[error("stratification error: group {group} {reason}")]
    Stratification { group: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unknown group {group} (dataset has {groups} groups)")]
    UnknownGroup { group: usize, groups: usize },

    #[error("group weights off the simplex: {0}")]
    OffSimplex(String),

    #[error("metric `{metric}` does not support {task} tasks")]
    IncompatibleTask { metric: String, task: String },

    #[error("metric `{metric}`: group {group} has no {stratum} samples")]
    EmptyStratum {
        metric: String,
        group: usize,
        stratum: &'static str,
    },

    #[error("divergence at step {step}: `{variable}` is non-finite or exceeds the norm guard")]
    Divergence { step: usize, variable: &'static str },

    #[error("lower-level solve did not converge in {iters} iterations (gradient norm {grad_norm:e})")]
    LowerNotConverged { iters: usize, grad_norm: f64 },

    #[error("conjugate gradients did not converge in {iters} iterations (residual {residual:e})")]
    CgNotConverged { iters: usize, residual: f64 },

    #[error("missing strong convexity: the l2 coefficient must be positive")]
    NotStronglyConvex,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

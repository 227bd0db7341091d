use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A block that has to be inverted is singular or indefinite.
    #[error("degenerate material: {0}")]
    Degenerate(String),

    #[error("material sample {sample} is not admissible: {detail}")]
    Admissibility { sample: usize, detail: String },

    #[error("conjugate gradients did not reach {tol:e} after {iterations} iterations (last relative residual {last:e})", last = residuals.last().copied().unwrap_or(f64::NAN))]
    NotConverged {
        iterations: usize,
        tol: f64,
        residuals: Vec<f64>,
    },

    #[error("dense problem has {unknowns} unknowns, cap is {cap}")]
    SizeCap { unknowns: usize, cap: usize },

    #[error("{path}: field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("{path}: expected convention \"mandel-sqrt2\", found {found:?}")]
    Convention { path: PathBuf, found: Option<String> },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Convention { .. } | Error::Io(_) => 2,
            Error::InvalidInput(_) | Error::Degenerate(_) | Error::Admissibility { .. } => 3,
            Error::NotConverged { .. } | Error::Internal(_) => 4,
            Error::SizeCap { .. } => 5,
        }
    }

    /// Short machine readable class name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Degenerate(_) => "degenerate-material",
            Error::Admissibility { .. } => "admissibility",
            Error::NotConverged { .. } => "solver-not-converged",
            Error::SizeCap { .. } => "size-cap",
            Error::Parse { .. } => "parse",
            Error::Convention { .. } => "convention",
            Error::Internal(_) => "internal",
            Error::Io(_) => "io",
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid step size: {0}")]
    InvalidStep(String),
    #[error("regime violation: {0}")]
    RegimeViolation(String),
    #[error("out of regime: {0}")]
    OutOfRegime(String),
    #[error("oracle queried at time {requested} but the problem is at time {current}")]
    OutOfSync { requested: usize, current: usize },
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),
    #[error("contraction violated: step ratio {ratio:.6} exceeds {limit:.6}")]
    ContractionViolation { ratio: f64, limit: f64 },
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("beta_t is only defined for t >= 1")]
    UndefinedBeta,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("calibration failed: {0}")]
    CalibrationFailure(String),
    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("in trial {trial}: {source}")]
    InTrial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_trial(self, trial: usize) -> Self {
        Error::InTrial {
            trial,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

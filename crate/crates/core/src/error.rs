use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ExitlabError>;

#[derive(Debug, Error)]
pub enum ExitlabError {
    #[error("invalid spectrum: {0}")]
    SpectrumInvalid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The noise matrix at the origin is not surjective, or a covariance is not SPD.
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("state {norm:.6e} outside conjugacy validity radius {radius:.6e}")]
    OutsideValidity { norm: f64, radius: f64 },

    #[error("time step {dt} larger than horizon {t}")]
    StepTooLarge { dt: f64, t: f64 },

    #[error("flow did not leave the domain before t_cap = {t_cap}")]
    NoExit { t_cap: f64 },

    #[error("domain inclusion violated: {0}")]
    InclusionViolated(String),

    #[error("path did not exit before t_cap = {t_cap}")]
    CapReached { t_cap: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("parse error at line {line}, key `{key}`: {message}")]
    Parse { line: usize, key: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A sweep cell failed after earlier cells were written.
    #[error("run incomplete, partial results written: {0}")]
    PartialRun(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl ExitlabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ExitlabError::Io { path: path.into(), source }
    }

    /// Validation and parse errors map to exit code 1, everything else to 2.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            ExitlabError::Parse { .. }
                | ExitlabError::Validation(_)
                | ExitlabError::SpectrumInvalid(_)
                | ExitlabError::InvalidInput(_)
                | ExitlabError::InclusionViolated(_)
                | ExitlabError::RankDeficient(_)
        )
    }
}

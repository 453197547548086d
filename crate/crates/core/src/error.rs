use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the inference pipeline.
#[derive(Debug, Error)]
pub enum EnciError {
    #[error("non-finite input")]
    NonFinite,

    #[error("degenerate sample set (zero median distance)")]
    DegenerateSamples,

    #[error("degenerate input to independence test")]
    DegenerateHsicInput,

    #[error("sample too small for gamma approximation (need at least {min}, got {got})")]
    SampleTooSmall { min: usize, got: usize },

    #[error("regressor has no variation across groups")]
    NoVariation,

    #[error("group too small: group {group} has {rows} rows, need at least 2")]
    GroupTooSmall { group: usize, rows: usize },

    #[error("degenerate component: {0}")]
    DegenerateComponent(String),

    #[error("ICA did not converge: {0}")]
    NoConvergence(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no cluster exceeds group size {0}")]
    NoEligibleCluster(usize),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EnciError {
    /// True for failures of the numerical routines themselves (as opposed to
    /// malformed input data or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            EnciError::DegenerateSamples
                | EnciError::DegenerateHsicInput
                | EnciError::NoVariation
                | EnciError::DegenerateComponent(_)
                | EnciError::NoConvergence(_)
        )
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EnciError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, EnciError>;

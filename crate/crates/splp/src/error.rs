use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("probability {0} outside the open interval (0, 1)")]
    InvalidProbability(f64),

    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("no trained parameters for class pair ({c}, {c_prime})")]
    MissingClassPair { c: usize, c_prime: usize },

    #[error("no {label} training samples for class pair ({c}, {c_prime})")]
    EmptyTrainingSet {
        label: &'static str,
        c: usize,
        c_prime: usize,
    },

    #[error("instance has {n} detections; exhaustive enumeration is limited to {max}")]
    TooManyDetections { n: usize, max: usize },

    #[error("solution is infeasible: {0}")]
    Infeasible(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("linear program error: {0}")]
    Lp(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

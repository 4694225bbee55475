use thiserror::Error;

/// Errors raised by the analysis, estimation and training layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {what} = {index}, limit {limit}")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("dimension mismatch: {what} expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("induced chain is not ergodic: {0}")]
    Ergodicity(String),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("mixing time exceeds the cap of {cap} steps (m = {last_tv:.3e})")]
    MixingTimeout { cap: usize, last_tv: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidMdp(_) | Error::Json(_) => 2,
            Error::Ergodicity(_)
            | Error::Solver(_)
            | Error::MixingTimeout { .. }
            | Error::Numerical(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

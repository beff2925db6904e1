use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("topology is not connected")]
    Disconnected,

    #[error("no connected Erdos-Renyi sample after {attempts} attempts (n = {n}, ratio = {ratio}); ratio is too small for n")]
    ResampleExhausted { n: usize, ratio: f64, attempts: usize },

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: String, iterations: usize },

    /// A tracker or iterate became NaN/Inf. Agent indices are 1-based.
    #[error("{algorithm} diverged: agent {agent} produced a non-finite value in round {round}")]
    Divergence {
        algorithm: String,
        agent: usize,
        round: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("instance file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

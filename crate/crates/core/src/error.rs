use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Unknown ids, out-of-range parameters and other caller mistakes.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("graph is disconnected: node {0} is unreachable from node 0")]
    Disconnected(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("invalid node id {node} (network has {count} nodes)")]
    InvalidNode { node: usize, count: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sinkhorn did not converge after {iterations} iterations (marginal error {violation:e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("episode already finished at step {0}")]
    EpisodeDone(usize),

    #[error("invalid action from {agent} at step {step}: {reason}")]
    InvalidAction {
        agent: String,
        step: usize,
        reason: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

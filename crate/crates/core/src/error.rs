use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state {state} out of range (num_states = {num_states})")]
    StateOutOfRange { state: usize, num_states: usize },

    #[error("action {action} out of range for state {state} ({available} actions)")]
    ActionOutOfRange {
        state: usize,
        action: usize,
        available: usize,
    },

    #[error("cannot step from terminal state {0}")]
    TerminalState(usize),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("schedule step index must be >= 1, got {0}")]
    ZeroStep(u64),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("value iteration did not converge in {iterations} sweeps (last change {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("non-terminal next state {0} requires a next action for SARSA")]
    MissingNextAction(usize),

    #[error("agent is {actual}, operation requires {expected}")]
    WrongAgent {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

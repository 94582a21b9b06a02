use thiserror::Error;

use crate::mdp::{ActionId, StateId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("automaton failed validation with {} violation(s); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidAutomaton(Vec<Violation>),

    /// Iteration stopped at the sweep cap; carries the last iterate.
    #[error("no convergence after {sweeps} sweeps (residual {residual:e})")]
    NotConverged {
        sweeps: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("state {state} has no available actions")]
    NoActions { state: StateId },

    #[error("action {action} is not available in state {state}")]
    ActionUnavailable { state: StateId, action: ActionId },

    #[error("state {state} is outside the state space (size {len})")]
    StateOutOfRange { state: StateId, len: usize },

    #[error("state {state} is not in the envelope")]
    OutsideEnvelope { state: StateId },

    #[error("envelope is empty")]
    EmptyEnvelope,

    #[error("no goal state is reachable from state {start}")]
    Unreachable { start: StateId },

    #[error("map: {0}")]
    Map(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("table: {0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

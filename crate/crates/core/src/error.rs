use thiserror::Error;

use crate::AgentId;

/// Errors raised by the coordination library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("leader selection failed: {0}")]
    Selection(String),

    #[error("agent {0} has no admissible enclosing simplex")]
    Connectivity(AgentId),

    #[error("network error: {0}")]
    Network(String),

    #[error("missing position for in-neighbor {neighbor} of agent {agent}")]
    Communication { agent: AgentId, neighbor: AgentId },

    #[error("flow singularity at ({x}, {y})")]
    Singularity { x: f64, y: f64 },

    #[error("stagnation at ({x}, {y}): jacobian determinant {jac_det}")]
    Stagnation { x: f64, y: f64, jac_det: f64 },

    #[error("agent {agent} lies inside the exclusion disk around failed agent {failed}")]
    InsideExclusion { agent: AgentId, failed: AgentId },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("numeric failure at t = {time}s (tick {tick}): {message}")]
    Numeric {
        tick: u64,
        time: f64,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

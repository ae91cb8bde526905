use thiserror::Error;

use crate::model::RequestId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input out of domain: {0}")]
    InputDomain(String),

    #[error("degenerate request: origin equals destination {0}")]
    DegenerateRequest(crate::grid::Cell),

    #[error("request {0} is already a member of the coalition")]
    DuplicateAdmission(RequestId),

    #[error("request {0} has not been serviced")]
    Unserviced(RequestId),

    #[error("unknown request {0}")]
    UnknownRequest(RequestId),

    #[error("instance too large for the exact solver: {what} = {got} exceeds cap {cap}; use the desk preset or raise the cap")]
    Capacity { what: &'static str, got: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

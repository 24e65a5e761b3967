use thiserror::Error;

/// Errors surfaced by the balancing library.
///
/// `Infeasible` is the one callers are expected to branch on: it means no
/// element-to-processor map can satisfy the per-rank capacity, either because
/// `np * lelt < nelgt` outright or because a forced-cut cascade left the last
/// rank over capacity. The CLI maps it to its own exit code.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// No valid assignment exists under the given rank count and capacity.
    #[error("infeasible partition on rank {rank}: {detail}")]
    Infeasible { rank: usize, detail: String },

    /// A mesh, region, or run parameter failed validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A point fell outside the closed domain box.
    #[error("point ({0}, {1}, {2}) lies outside the domain")]
    OutOfDomain(f64, f64, f64),

    /// Inputs violated an internal calling contract (e.g. a transfer plan
    /// referencing elements the source rank does not own).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A serialized element payload could not be decoded.
    #[error("malformed payload: {0}")]
    Payload(String),

    /// File access failed (config read, trace write). Carries the rendered
    /// cause so the error stays cloneable.
    #[error("i/o failure: {0}")]
    Io(String),
}

impl Error {
    pub fn infeasible(rank: usize, detail: impl Into<String>) -> Self {
        Error::Infeasible {
            rank,
            detail: detail.into(),
        }
    }

    pub fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidConfig(detail.into())
    }

    pub fn contract(detail: impl Into<String>) -> Self {
        Error::Contract(detail.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

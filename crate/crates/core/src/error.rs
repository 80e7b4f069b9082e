use thiserror::Error;

use crate::saturation::SaturationRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A detail space needed by the operation has no basis functions.
    #[error("empty space: level {level} has no functions of parity {parity}")]
    EmptySpace { level: usize, parity: String },

    /// Cholesky-type factorization met a nonpositive pivot.
    #[error("factorization failed at pivot {index} (value {pivot:e})")]
    Factorization { index: usize, pivot: f64 },

    /// A numerical contract (tolerance, bound, definiteness) was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The refinement schedule ran past its cap without stabilizing.
    #[error("cap exceeded: r = {r} > {cap}")]
    CapExceeded {
        r: usize,
        cap: usize,
        partial: Box<SaturationRecord>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::EmptySpace { .. } => "empty_space",
            Error::Factorization { .. } => "factorization",
            Error::Contract(_) => "contract",
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }

    /// True for failures of numerical contracts as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Factorization { .. } | Error::Contract(_) | Error::CapExceeded { .. }
        )
    }
}

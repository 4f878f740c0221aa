use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("singular least-squares fit (design rank-deficient after jitter)")]
    SingularFit,

    #[error("power iteration did not converge after {iterations} iterations (last change {last_delta:e})")]
    Convergence {
        iterations: usize,
        last_delta: f64,
        /// Last L1-normalised iterate.
        last: Vec<f64>,
    },

    #[error("atlas error: {0}")]
    Atlas(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training diverged in fold {fold} at epoch {epoch}: {detail}")]
    Divergence {
        fold: usize,
        epoch: usize,
        detail: String,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Dimension { .. } | Error::Contract(_) | Error::Atlas(_) => {
                ErrorKind::Config
            }
            Error::Data(_) => ErrorKind::Data,
            Error::NonFinite { .. }
            | Error::SingularFit
            | Error::Convergence { .. }
            | Error::Divergence { .. } => ErrorKind::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

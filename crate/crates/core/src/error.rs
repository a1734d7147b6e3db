//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data is unusable (non-finite history values and similar).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A series contained no finite value at all.
    #[error("series has no finite values")]
    InvalidSeries,

    #[error("history length {history} leaves no residual degrees of freedom for {params} parameters")]
    DegreesOfFreedom { history: usize, params: usize },

    #[error("history design matrix is rank deficient (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    /// The history model fits exactly, so the MOSUM normalisation is undefined.
    #[error("residual scale is zero{}", pixel.map(|p| format!(" for pixel {p}")).unwrap_or_default())]
    ZeroSigma { pixel: Option<usize> },

    #[error("format error: {0}")]
    Format(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical pipeline rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegreesOfFreedom { .. } | Error::RankDeficient { .. } | Error::ZeroSigma { .. }
        )
    }

    /// True for unreadable or malformed data.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::Format(_)
                | Error::Capacity(_)
                | Error::Parse { .. }
                | Error::Io(_)
                | Error::InvalidInput(_)
                | Error::InvalidSeries
        )
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown transform code {code} for `{mnemonic}` (expected 1..=7)")]
    UnknownTcode { mnemonic: String, code: i64 },

    #[error("`{mnemonic}` has non-positive value {value} at position {index}; log transform undefined")]
    NonPositiveLog { mnemonic: String, index: usize, value: f64 },

    #[error("series `{mnemonic}` too short: need {needed} observations, have {have}")]
    SeriesTooShort { mnemonic: String, needed: usize, have: usize },

    #[error("mnemonic `{0}` not found in panel")]
    MissingMnemonic(String),

    #[error("hemisphere `{0}` has no usable features")]
    EmptyHemisphere(String),

    #[error("feature `{0}` is constant over the training range")]
    ConstantFeature(String),

    #[error("malformed data: {0}")]
    Data(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("training diverged (non-finite loss) for seed {seed} at epoch {epoch}")]
    Diverged { seed: u64, epoch: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("look-ahead detected: {0}")]
    Leakage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::UnknownTcode { .. }
            | Error::NonPositiveLog { .. }
            | Error::SeriesTooShort { .. }
            | Error::MissingMnemonic(_)
            | Error::EmptyHemisphere(_)
            | Error::ConstantFeature(_)
            | Error::Data(_)
            | Error::Csv(_)
            | Error::Leakage(_) => ErrorCategory::Data,
            Error::Dimension(_)
            | Error::Diverged { .. }
            | Error::Numerical(_)
            | Error::Insufficient(_) => ErrorCategory::Numerical,
            Error::Io(_) | Error::Json(_) => ErrorCategory::Io,
        }
    }
}

use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed record: {0}")]
    MalformedRecord(String),

    #[error("length mismatch in field `{field}`: expected {expected}, found {found}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite reward at index {index}")]
    NonFiniteReward { index: usize },

    #[error("invalid log-probability in field `{field}` at index {index}: {value}")]
    InvalidLogprob {
        field: &'static str,
        index: usize,
        value: f64,
    },

    #[error("trace is empty")]
    EmptyTrace,

    #[error("empty input")]
    EmptyInput,

    #[error("empty history")]
    EmptyHistory,

    #[error("invalid mask value {value} at index {index} for {mode} mask")]
    InvalidMaskValue {
        index: usize,
        value: i8,
        mode: &'static str,
    },

    #[error("negative threshold: {0}")]
    NegativeThreshold(f64),

    #[error("negative noise scale: {0}")]
    NegativeNoiseScale(f64),

    #[error("segments do not tile the trace: {0}")]
    TilingViolation(String),

    #[error("trace of length {len} exceeds the enumeration limit of {max}")]
    TraceTooLong { len: usize, max: usize },

    #[error("missing field `{0}`")]
    MissingLogprobs(&'static str),

    #[error("pair mismatch: {0}")]
    PairMismatch(String),

    #[error("expected a chosen sample")]
    NotChosenSample,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("token {token} out of vocabulary of size {vocab}")]
    TokenOutOfVocab { token: String, vocab: usize },

    #[error("objective {0} is not supported here")]
    UnsupportedObjective(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Name of the record field the error refers to, when there is one.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            Error::LengthMismatch { field, .. } | Error::InvalidLogprob { field, .. } => {
                Some(field)
            }
            Error::NonFiniteReward { .. } => Some("rewards"),
            Error::EmptyTrace => Some("tokens"),
            Error::MissingLogprobs(field) => Some(field),
            Error::NotChosenSample | Error::PairMismatch(_) => Some("class"),
            _ => None,
        }
    }
}

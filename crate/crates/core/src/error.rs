use thiserror::Error;

/// Errors raised by the interpretation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("image too small: {width}x{height} (minimum 5x5)")]
    ImageTooSmall { width: usize, height: usize },
    #[error("training labels contain a single class")]
    SingleClassTraining,
    #[error("assignment is missing slot `{0}`")]
    IncompleteAssignment(String),
    #[error("annotation `{record}` is missing slot `{slot}`")]
    IncompleteAnnotation { record: String, slot: String },
    #[error("unknown image id `{0}`")]
    UnknownImage(String),
    #[error("no negative examples available")]
    NoNegativesAvailable,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no interpretation: slot `{slot}` has no gate-passing candidate")]
    NoInterpretation { slot: String },
    #[error("combination budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("unsupported format version `{found}` (expected major {expected})")]
    FormatVersion { found: String, expected: u32 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn degenerate(msg: impl Into<String>) -> Error {
    Error::DegenerateGeometry(msg.into())
}

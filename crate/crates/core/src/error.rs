use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("event list is empty")]
    EmptyEvents,
    #[error("first event is spoken by the agent; conversations must open with a user utterance")]
    LeadingAgent,
    #[error("turn {0} has empty user text")]
    EmptyUserText(usize),
    #[error("turn indices must run 1..=t contiguously; found {found} at position {position}")]
    NonContiguousTurns { position: usize, found: usize },
    #[error("turn {0} has no agent reply but is not the final turn")]
    MissingAgentReply(usize),

    #[error("invalid label schema: {0}")]
    InvalidSchema(String),
    #[error("variant {variant} needs a {needed} schema")]
    SchemaModeMismatch { variant: &'static str, needed: &'static str },
    #[error("cannot build a prompt for an empty conversation")]
    EmptyConversation,

    #[error("boundary index {index} outside 1..{length}")]
    BoundaryOutOfRange { index: usize, length: usize },
    #[error("segmentation needs at least 2 units, got {0}")]
    TooShort(usize),
    #[error("reference and hypothesis lengths differ ({reference} vs {hypothesis})")]
    LengthMismatch { reference: usize, hypothesis: usize },
    #[error("window size {k} invalid for {n} units (need 1 <= k < n)")]
    InvalidWindow { k: usize, n: usize },
    #[error("rating row {row} sums to {sum}, expected {expected} raters")]
    RatingRowSum { row: usize, sum: usize, expected: usize },
    #[error("need at least {0}")]
    InsufficientRatings(&'static str),
    #[error("predictions and gold are not aligned: {0}")]
    Misaligned(String),
    #[error("dataset does not suit this variant: {0}")]
    DatasetMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: dialogue {id}: {message}")]
    BadDialogue {
        path: PathBuf,
        id: String,
        message: String,
    },
    #[error("duplicate conversation id {0}")]
    DuplicateId(String),
    #[error("dev size {n_dev} out of range for {total} conversations")]
    SplitRange { n_dev: usize, total: usize },
    #[error("unknown {kind} `{value}`")]
    UnknownName { kind: &'static str, value: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("item {item} out of range (graph has {num_items} items)")]
    ItemOutOfRange { item: usize, num_items: usize },

    #[error("self-loop on item {0}")]
    SelfLoop(usize),

    #[error("cycle detected involving item {0}")]
    Cycle(usize),

    #[error("empty target set")]
    EmptyTarget,

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown concept name `{0}`")]
    UnknownConcept(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("session state: {0}")]
    Session(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

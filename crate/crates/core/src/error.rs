use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    Data(String),
    #[error("{path}: line {line}: {msg}")]
    Csv {
        path: PathBuf,
        line: u64,
        msg: String,
    },
    #[error("dataset is empty after filtering")]
    EmptyAfterFilter,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("tower is frozen")]
    Frozen,
    #[error("shield violation in {component}: checksum {expected:016x} became {actual:016x}")]
    ShieldViolation {
        component: &'static str,
        expected: u64,
        actual: u64,
    },
    #[error("prompt of {len} tokens does not fit max_seq {max_seq}")]
    SequenceTooLong { len: usize, max_seq: usize },
    #[error("vocabulary mismatch: {0} vs {1}")]
    VocabMismatch(usize, usize),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Tensor(#[from] tensorlab::TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn is_shield_violation(&self) -> bool {
        matches!(self, Error::ShieldViolation { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

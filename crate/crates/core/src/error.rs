use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot normalize a vector whose entries are all zero")]
    AllZero,
    #[error("negative entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("model format error: {0}")]
    Format(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("objective undefined: {0}")]
    Domain(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("trajectory does not match the topic matrix: {0}")]
    TrajectoryMismatch(String),
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("no token survived vocabulary filtering")]
    EmptyAfterFiltering,
    #[error("cannot split {n_docs} documents into {k} folds")]
    TooFewDocs { n_docs: usize, k: usize },
    #[error("held-out targets have zero variance")]
    DegenerateTruth,
    #[error("AUC needs at least one positive and one negative label")]
    OneClassOnly,
    #[error("grid search supports at most 3 topics, got {0}")]
    KTooLarge(usize),
    #[error("training failed at mini-batch {batch} (epoch {epoch}): {source}")]
    Training {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite(_) | Error::Domain(_) => true,
            Error::Training { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

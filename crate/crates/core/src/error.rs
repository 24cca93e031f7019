use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic bytes in {path}: expected \"PVTG\"")]
    BadMagic { path: PathBuf },
    #[error("unsupported token grid version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated token grid {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("token grid {path} has {extra} trailing bytes after the payload")]
    TrailingBytes { path: PathBuf, extra: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("clustering requires at least one point")]
    EmptyInput,
    #[error("requested {requested} clusters from {points} points")]
    TooManyClusters { requested: usize, points: usize },
    #[error("sequence of {len} tokens exceeds max_seq {max}")]
    SequenceOverflow { len: usize, max: usize },
    #[error("token id {id} out of vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("cache length mismatch across layers: {0:?}")]
    CacheMismatch(Vec<usize>),
    #[error("selection index {index} out of range for {n_visual} visual tokens")]
    SelectionOutOfRange { index: usize, n_visual: usize },
    #[error("no visual tokens to score")]
    EmptyScores,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{onset}, {offset}]: offset must exceed onset")]
    InvalidInterval { onset: f64, offset: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("scale mismatch: {0}")]
    ScaleMismatch(String),

    #[error("zero-norm embedding at row {row}")]
    ZeroNorm { row: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("speaker {0} has no assigned segments")]
    EmptyCluster(usize),

    #[error("{got} speakers exceed the maximum of {max}")]
    TooManySpeakers { got: usize, max: usize },

    #[error("session {session}: expected exactly 2 speakers, found {found}")]
    NotTwoSpeakers { session: String, found: usize },

    #[error("empty reference: no scored reference speech remains after exclusions")]
    EmptyReference,

    #[error("rttm line {line}: {msg}")]
    RttmParse { line: usize, msg: String },

    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    PayloadLength { expected: usize, found: usize },

    #[error("manifest/payload mismatch: {0}")]
    ManifestMismatch(String),

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SegError>;

#[derive(Debug, Error)]
pub enum SegError {
    /// A caller broke an operation's precondition (mismatched channels, shapes).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid parameter or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input image dimensions the network cannot consume.
    #[error("input shape error: {height}x{width} is not divisible by the required multiple {multiple}")]
    InputShape {
        height: usize,
        width: usize,
        multiple: usize,
    },

    #[error(transparent)]
    WeightFile(#[from] WeightFileError),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("cannot decode image {}: {message}", path.display())]
    Decode { path: PathBuf, message: String },

    #[error("image {} has unequal color channels; expected a grayscale mask", .0.display())]
    NotGrayscale(PathBuf),

    #[error("cannot write {}: {message}", path.display())]
    Write { path: PathBuf, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Parse failures of the binary weight container.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeightFileError {
    #[error("bad magic {found:?}, expected \"SEGW\"")]
    BadMagic { found: Vec<u8> },

    #[error("unsupported weight format version {found} (supported: {supported})")]
    Version { found: u16, supported: u16 },

    #[error("weight file truncated while reading {record}")]
    Truncated { record: String },

    #[error("shape mismatch in {layer} (record `{record}`): expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        layer: String,
        record: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("missing record `{record}` for {layer}")]
    MissingRecord { layer: String, record: String },

    #[error("unexpected record `{record}` at position {index}")]
    UnexpectedRecord { record: String, index: usize },

    #[error("malformed record header at position {index}: {message}")]
    Malformed { index: usize, message: String },

    #[error("{extra} trailing bytes after the last payload")]
    TrailingBytes { extra: usize },
}

impl SegError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SegError::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the recognition pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("duplicate clip id `{0}`")]
    DuplicateClipId(String),

    #[error("invalid pgm frame {path}: {msg}")]
    Pgm { path: PathBuf, msg: String },

    #[error("frame sequence in {dir}: {msg}")]
    FrameSequence { dir: PathBuf, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("clip `{clip}` is too small for a {sx}x{sy}x{st} block")]
    ClipTooSmall {
        clip: String,
        sx: usize,
        sy: usize,
        st: usize,
    },

    #[error("not enough samples: need at least {needed}, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },

    #[error("degenerate filter matrix: W·Wᵀ is singular (min eigenvalue {min_eigenvalue:e})")]
    DegenerateFilters { min_eigenvalue: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("clip `{0}` produced no descriptors")]
    EmptyClip(String),

    #[error("training data has a single class")]
    SingleClass,

    #[error("histogram clip ids differ: `{0}` vs `{1}`")]
    ClipIdMismatch(String, String),

    #[error("need at least two distinct subjects, found {0}")]
    TooFewSubjects(usize),

    #[error("unsupported model format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (files, flags, config) rather
    /// than by a numerical failure inside the pipeline.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::DegenerateFilters { .. } | Error::SingleClass | Error::EmptyClip(_)
        )
    }
}

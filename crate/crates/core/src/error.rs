//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed wav file {path}: {detail}")]
    WavFormat { path: String, detail: String },

    #[error("unsupported wav encoding in {path}: {detail}")]
    WavUnsupported { path: String, detail: String },

    #[error("empty audio stream in {path}")]
    EmptyAudio { path: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch at {location}: {detail}")]
    Shape { location: String, detail: String },

    #[error("training aborted: non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("stale forward cache: parameters changed since the forward pass")]
    StaleCache,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs (files, labels, configuration)
    /// rather than by a failure while running. The CLI maps these to exit
    /// code 2 and everything else to 3.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::WavFormat { .. }
                | Error::WavUnsupported { .. }
                | Error::EmptyAudio { .. }
                | Error::Manifest(_)
                | Error::Validation(_)
                | Error::Shape { .. }
        )
    }
}

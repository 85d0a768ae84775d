use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("click ({row}, {col}) outside {height}x{width} image")]
    ClickOutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty mask: {0}")]
    EmptyMask(String),

    #[error("predictor precondition violated: {0}")]
    Precondition(String),

    #[error("focal normalizer degenerate (P = {0:e})")]
    DegenerateNormalizer(f64),

    #[error("loss denominator is zero")]
    ZeroDenominator,

    #[error("nothing to undo")]
    NothingToUndo,

    #[error("transport error talking to {endpoint} after {elapsed:?}: {message}")]
    Transport {
        endpoint: String,
        elapsed: Duration,
        message: String,
    },

    #[error("malformed predictor response: {0}")]
    MalformedResponse(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("dataset error in instance `{instance}`: {message}")]
    Instance { instance: String, message: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn instance(instance: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Instance {
            instance: instance.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn check_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape { expected, actual })
    }
}

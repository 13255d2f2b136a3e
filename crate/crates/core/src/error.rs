use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A frame needed `holes` new structural points but its candidate pool
    /// only held `available`.
    #[error("seeding failed at frame {frame}: {available} candidates for {holes} empty slots")]
    SeedingFailure {
        frame: usize,
        holes: usize,
        available: usize,
    },

    #[error("optimization diverged at iteration {iteration} (loss = {loss})")]
    Divergence { iteration: usize, loss: f64 },

    #[error("point is behind the camera (view depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("trajectory alignment failed: {0}")]
    AlignmentFailure(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("tracker failure: {0}")]
    Tracker(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

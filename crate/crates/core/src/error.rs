use std::fmt;
use std::path::PathBuf;

/// Pipeline stage names used to tag errors raised inside [`crate::pipeline::synthesize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Projection,
    Splat,
    Mask,
    Completion,
    Warp,
    Upsample,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Projection => "projection",
            Stage::Splat => "splat",
            Stage::Mask => "mask",
            Stage::Completion => "completion",
            Stage::Warp => "warp",
            Stage::Upsample => "upsample",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("point lies behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("cannot complete flow: target mask has foreground but no valid seed pixels")]
    CannotComplete,

    #[error("{path}: malformed file at byte {offset}: {reason}")]
    Format { path: PathBuf, offset: u64, reason: String },

    #[error("{path}: {reason}")]
    Validation { path: PathBuf, reason: String },

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

    #[error("[{stage}] {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_stage(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_same_size(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

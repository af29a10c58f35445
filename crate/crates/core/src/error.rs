use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch on {axis}: expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        axis: String,
        expected: String,
        found: String,
    },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("{op}: kernel extent {extent} on axis {axis} must be odd")]
    EvenKernel {
        op: &'static str,
        axis: &'static str,
        extent: usize,
    },

    #[error("{op}: window extent on axis {axis} must be at least 1")]
    ZeroWindow { op: &'static str, axis: usize },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("label {0} is not 0 or 1")]
    InvalidLabel(f64),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("{0}")]
    InvalidConfig(String),

    #[error("pooling stage {stage} cannot reduce axis {axis} (extent already 1)")]
    PoolingCollapse { stage: String, axis: &'static str },

    #[error("frame extent {extent} on axis {axis} is odd; resize to an even extent before the wavelet transform")]
    OddExtent { axis: &'static str, extent: usize },

    #[error("missing parameter {0}")]
    MissingParameter(String),

    #[error("malformed {format} data: {reason}")]
    Format {
        format: &'static str,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty {0} split")]
    EmptySplit(String),
}

impl Error {
    pub(crate) fn shape(
        op: &'static str,
        axis: impl Into<String>,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::ShapeMismatch {
            op,
            axis: axis.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }
}

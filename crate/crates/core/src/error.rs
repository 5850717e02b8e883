use std::path::PathBuf;

use crate::model::{Activation, Variant};

/// Errors produced anywhere in the runtime.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor extents do not fit together.
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A structural setting (channel plan, kernel setup, head split, input size) is unusable.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A numeric argument is outside its allowed range.
    #[error("invalid value: {0}")]
    Validation(String),

    #[error("checksum mismatch for tensor `{0}`")]
    Checksum(String),

    #[error("weight archive is missing tensor `{0}`")]
    MissingTensor(String),

    #[error("weight archive contains unexpected tensor `{0}`")]
    UnexpectedTensor(String),

    #[error("variant mismatch: archive holds METER {archive}, expected METER {expected}")]
    VariantMismatch { archive: Variant, expected: Variant },

    #[error("activation mismatch: archive uses {archive}, expected {expected}")]
    ActivationMismatch { archive: Activation, expected: Activation },

    #[error("unsupported weight archive version {0}")]
    UnsupportedVersion(u32),

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("failed to decode {}: {detail}", path.display())]
    Decode { path: PathBuf, detail: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Every sample of a dataset failed or the dataset had no entries.
    #[error("no usable samples: {0}")]
    EmptyDataset(String),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

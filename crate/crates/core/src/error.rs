use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid convolution geometry: {0}")]
    ConvGeometry(String),

    #[error("{0}")]
    Invalid(String),

    #[error("target class {class} out of range for {classes} classes")]
    TargetOutOfRange { class: usize, classes: usize },

    #[error("unknown raw label code {0}")]
    UnknownLabelCode(u32),

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: u64, actual: u64 },

    #[error("payload length mismatch: header declares {expected} bytes, file holds {actual}")]
    PayloadLength { expected: u64, actual: u64 },

    #[error("malformed {format} field `{field}`: {detail}")]
    Format {
        format: &'static str,
        field: &'static str,
        detail: String,
    },

    #[error("compressed input {0}: decompress externally first (e.g. `gunzip -k file.nii.gz`)")]
    CompressedInput(PathBuf),

    #[error("config mismatch: expected `{expected}`, found `{found}`")]
    ConfigMismatch { expected: String, found: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("non-finite loss {loss} at iteration {iteration}")]
    NonFiniteLoss { iteration: u64, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier for machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::ConvGeometry(_) => "conv_geometry",
            Error::Invalid(_) => "invalid",
            Error::TargetOutOfRange { .. } => "target_range",
            Error::UnknownLabelCode(_) => "unknown_label",
            Error::TruncatedPayload { .. } => "truncated_payload",
            Error::PayloadLength { .. } => "payload_length",
            Error::Format { .. } => "format",
            Error::CompressedInput(_) => "compressed_input",
            Error::ConfigMismatch { .. } => "config_mismatch",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Io { .. } => "io",
        }
    }
}

use std::io;
use std::path::{Path, PathBuf};

use antiqa_core::aggregate::PoolError;
use antiqa_core::calibrate::CalibrationError;
use antiqa_core::harness::HarnessError;
use antiqa_core::metrics::MetricError;
use antiqa_core::net::NetError;
use antiqa_core::preproc::PreprocError;
use antiqa_core::tensor::TensorError;
use antiqa_core::train::TrainError;
use serde::Serialize;

use crate::manifest::Problem;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("manifest validation failed with {} problem(s)", .0.len())]
    Manifest(Vec<Problem>),
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Usage(String),
    #[error("gradient audit failed: {} check(s) over tolerance", .0.len())]
    AuditFailed(Vec<String>),
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Preproc(#[from] PreprocError),
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), message: message.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Manifest(_) => "manifest",
            Error::Mismatch(_) => "mismatch",
            Error::Usage(_) => "usage",
            Error::AuditFailed(_) => "audit_failed",
            Error::Image { .. } => "image",
            Error::Net(_) => "network",
            Error::Train(_) => "train",
            Error::Calibration(_) => "calibration",
            Error::Harness(_) => "harness",
            Error::Pool(_) => "pool",
            Error::Metric(_) => "metric",
            Error::Preproc(_) => "preproc",
        }
    }

    /// The machine-readable form written to stderr by the CLI.
    pub fn report(&self) -> ErrorReport {
        let details = match self {
            Error::Manifest(p) => serde_json::to_value(p).ok(),
            Error::AuditFailed(f) => serde_json::to_value(f).ok(),
            Error::Train(TrainError::Aborted { epoch, batch, .. }) => {
                Some(serde_json::json!({ "epoch": epoch, "batch": batch }))
            }
            _ => None,
        };
        ErrorReport { error: ErrorBody { kind: self.kind(), message: self.to_string(), details } }
    }
}

impl From<TensorError> for Error {
    fn from(e: TensorError) -> Self {
        Error::Net(NetError::Tensor(e))
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: ErrorBody,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

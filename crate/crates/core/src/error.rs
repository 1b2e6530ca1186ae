use thiserror::Error;

use crate::config::ConfigError;
use crate::geometry::GeometryError;
use crate::ingest::IngestError;
use crate::pipeline::PipelineError;

/// Crate-level error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Internal,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Ingest(IngestError::Io(_)) => ErrorKind::Io,
            Error::Ingest(_) | Error::Config(_) => ErrorKind::Validation,
            Error::Pipeline(PipelineError::ThresholdOutOfRange(_)) => ErrorKind::Validation,
            Error::Pipeline(PipelineError::EmptyProfiles) => ErrorKind::Validation,
            Error::Geometry(_) | Error::Pipeline(_) => ErrorKind::Internal,
        }
    }
}

use std::path::Path;

use gsnmf::pipeline::PipelineError;
use gsnmf::projection::ProjectionError;
use gsnmf::{EngineError, ModelError};
use thiserror::Error;

use crate::io::IoError;

/// Failure of a command; [`CliError::exit_code`] maps it to the process
/// status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Inconsistent or invalid flags.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent input, or a failed write.
    #[error("{0}")]
    Data(String),
    /// Non-finite values during fitting or projection.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Numerical(_) => 4,
        }
    }

    /// File context for an io error: `--flag path: message`.
    pub fn file(flag: &str, path: &Path, err: IoError) -> Self {
        Self::Data(format!("--{flag} {}: {err}", path.display()))
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::Data(e.to_string())
    }
}

fn engine_is_numerical(e: &EngineError) -> bool {
    matches!(
        e,
        EngineError::NonFinite { .. }
            | EngineError::NonFiniteBound { .. }
            | EngineError::Numerics(_)
    )
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) => Self::Usage(e.to_string()),
            _ if engine_is_numerical(&e) => Self::Numerical(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<ProjectionError> for CliError {
    fn from(e: ProjectionError) -> Self {
        match e {
            ProjectionError::NonFinite(_) => Self::Numerical(e.to_string()),
            ProjectionError::Tolerance(_) => Self::Usage(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let numerical = match &e {
            PipelineError::Fit { source, .. } => engine_is_numerical(source),
            PipelineError::Projection { source, .. } => {
                matches!(source, ProjectionError::NonFinite(_))
            }
            _ => false,
        };
        if numerical {
            Self::Numerical(e.to_string())
        } else if matches!(e, PipelineError::Config(_)) {
            Self::Usage(e.to_string())
        } else {
            Self::Data(e.to_string())
        }
    }
}

use std::fmt;
use std::io;
use std::path::Path;

use a2net_core::backbone::ArchError;
use a2net_core::{BlockError, TensorError};

use crate::a2tn::A2tnError;

/// Everything that stops a command before it can report a result. All of
/// these map to exit code 2; a completed check that fails is not an error.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Arch(ArchError),
    Block(BlockError),
    Tensor(TensorError),
    Format(A2tnError),
    Json(serde_json::Error),
    Io { path: String, source: io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(msg) => f.write_str(msg),
            Self::Arch(e) => write!(f, "{e}"),
            Self::Block(e) => write!(f, "{e}"),
            Self::Tensor(e) => write!(f, "{e}"),
            Self::Format(e) => write!(f, "{e}"),
            Self::Json(e) => write!(f, "json: {e}"),
            Self::Io { path, source } => write!(f, "{path}: {source}"),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Usage(_) => None,
            Self::Arch(e) => Some(e),
            Self::Block(e) => Some(e),
            Self::Tensor(e) => Some(e),
            Self::Format(e) => Some(e),
            Self::Json(e) => Some(e),
            Self::Io { source, .. } => Some(source),
        }
    }
}

impl From<ArchError> for CliError {
    fn from(e: ArchError) -> Self {
        Self::Arch(e)
    }
}

impl From<BlockError> for CliError {
    fn from(e: BlockError) -> Self {
        Self::Block(e)
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        Self::Tensor(e)
    }
}

impl From<A2tnError> for CliError {
    fn from(e: A2tnError) -> Self {
        Self::Format(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Json(e)
    }
}

//! Command errors and their process exit codes.

use thiserror::Error;

use infocrop::budget::BudgetError;
use infocrop::crop::CropError;
use infocrop::edge::{EdgeError, MatrixError};
use infocrop::imaging::ImagingError;
use infocrop::srdl::SrdlError;
use infocrop::synth::SynthError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed input: {0}")]
    Decode(String),
    #[error("agent protocol violation: {0}")]
    Protocol(String),
    #[error("configuration error: {0}")]
    Config(String),
    /// Per-input failures already reported on stderr; exits with the code
    /// of the first.
    #[error("{failed} of {total} inputs failed")]
    Batch {
        failed: usize,
        total: usize,
        first: Box<CliError>,
    },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Io { .. } => 2,
            Self::Decode(_) => 3,
            Self::Protocol(_) => 4,
            Self::Config(_) => 5,
            Self::Batch { first, .. } => first.exit_code(),
        }
    }
}

impl From<ImagingError> for CliError {
    fn from(e: ImagingError) -> Self {
        match e {
            ImagingError::Io { path, source } => Self::io(path, source),
            ImagingError::Encode { .. } => Self::io("writing image", std::io::Error::other(e.to_string())),
            other => Self::Decode(other.to_string()),
        }
    }
}

impl From<EdgeError> for CliError {
    fn from(e: EdgeError) -> Self {
        match e {
            EdgeError::TooSmall { .. } => Self::Decode(e.to_string()),
            other => Self::Config(other.to_string()),
        }
    }
}

impl From<MatrixError> for CliError {
    fn from(e: MatrixError) -> Self {
        match e {
            MatrixError::Io(source) => Self::io("reading matrix", source),
            other => Self::Decode(other.to_string()),
        }
    }
}

impl From<CropError> for CliError {
    fn from(e: CropError) -> Self {
        match e {
            CropError::Config(msg) => Self::Config(msg),
            CropError::Edge(e) => e.into(),
            CropError::Imaging(e) => e.into(),
            other => Self::Decode(other.to_string()),
        }
    }
}

impl From<SrdlError> for CliError {
    fn from(e: SrdlError) -> Self {
        match e {
            SrdlError::Protocol(msg) => Self::Protocol(msg),
            SrdlError::Config(msg) => Self::Config(msg),
            SrdlError::Io { context, source } => Self::io(context, source),
            SrdlError::Edge(e) => e.into(),
            other => Self::Decode(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<BudgetError> for CliError {
    fn from(e: BudgetError) -> Self {
        match e {
            BudgetError::Synth(e) => e.into(),
            BudgetError::Crop(e) => e.into(),
            other => Self::Config(other.to_string()),
        }
    }
}

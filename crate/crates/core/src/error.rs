use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or architectures that must agree do not.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("client {client} failed in round {round}: {source}")]
    ClientFailure {
        client: usize,
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing columns: {}", missing.join(", "))]
    Schema { missing: Vec<String> },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("selection is empty: {0}")]
    EmptySelection(String),

    #[error("demand of {demand} samples exceeds the {supply} available")]
    Capacity { demand: usize, supply: usize },

    #[error("fusion is degenerate: every label was ruled out by some model")]
    DegenerateFusion,

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: bad file format: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// Stable short name of the failure class, for machine consumption.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Contract(_) | Error::InvalidState(_) => "internal",
            Error::InvalidInput(_) | Error::Parameter(_) => "input",
            Error::Divergence { .. } | Error::ClientFailure { .. } => "training",
            Error::Schema { .. } | Error::Row { .. } | Error::EmptySelection(_) | Error::Format { .. } => "data",
            Error::Capacity { .. } => "partition",
            Error::DegenerateFusion => "fusion",
            Error::Evaluation(_) => "evaluation",
            Error::Config(_) => "config",
            Error::Io { .. } | Error::Csv { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

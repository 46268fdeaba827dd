use std::io;
use std::path::PathBuf;

use ctsd::{AnalysisError, ConfigError, FilterError, QuadratureError, SignalError, SimulationError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Plot(String),
    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl CliError {
    /// 1 for anything wrong with what the user asked for, 2 when the run itself
    /// failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            _ => 2,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<QuadratureError> for CliError {
    fn from(e: QuadratureError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Config(c) => c.into(),
            SimulationError::NonPositiveDuration => Self::Config(e.to_string()),
            SimulationError::Unstable { .. } => Self::Runtime(e.to_string()),
        }
    }
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Simulation(s) => s.into(),
            AnalysisError::TooFewRatios(_) | AnalysisError::WindowNotCovered { .. } => {
                Self::Config(e.to_string())
            }
            other => Self::Runtime(other.to_string()),
        }
    }
}

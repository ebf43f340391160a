//! One error type for every command, sorted into the three failure classes
//! the process exit code distinguishes: bad configuration (2), bad or
//! missing data (3), numerical breakdown (4).

use std::path::Path;

use sphs_core::data::DataError;
use sphs_core::ode::OdeError;
use sphs_core::phs::{ConfigError, ModelError};
use sphs_core::pod::PodError;
use sphs_core::train::TrainError;
use sphs_core::verify::VerifyError;

#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => 2,
            CmdError::Data(_) => 3,
            CmdError::Numerical(_) => 4,
        }
    }

    /// I/O failure tied to the file it happened on.
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CmdError::Data(format!("{}: {e}", path.display()))
    }

    /// Parse failure at a specific line of a specific file.
    pub fn parse(path: &Path, line: usize, msg: impl std::fmt::Display) -> Self {
        CmdError::Data(format!("{}:{line}: {msg}", path.display()))
    }
}

impl From<ConfigError> for CmdError {
    fn from(e: ConfigError) -> Self {
        CmdError::Config(e.to_string())
    }
}

impl From<ModelError> for CmdError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Eval(_) => CmdError::Numerical(e.to_string()),
            ModelError::Dim { .. } | ModelError::Unsupported { .. } => {
                CmdError::Config(e.to_string())
            }
        }
    }
}

impl From<DataError> for CmdError {
    fn from(e: DataError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<OdeError> for CmdError {
    fn from(e: OdeError) -> Self {
        match e {
            OdeError::Grid(_) => CmdError::Data(e.to_string()),
            _ => CmdError::Numerical(e.to_string()),
        }
    }
}

impl From<TrainError> for CmdError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CmdError::Numerical(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Data(d) => d.into(),
            TrainError::Config(_) => CmdError::Config(e.to_string()),
        }
    }
}

impl From<VerifyError> for CmdError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Unsupported { .. } | VerifyError::Config(_) => {
                CmdError::Config(e.to_string())
            }
            VerifyError::Model(m) => m.into(),
            VerifyError::Ode(o) => o.into(),
            VerifyError::GridMismatch => CmdError::Data(e.to_string()),
        }
    }
}

impl From<PodError> for CmdError {
    fn from(e: PodError) -> Self {
        match e {
            PodError::Eig(_) => CmdError::Numerical(e.to_string()),
            _ => CmdError::Config(e.to_string()),
        }
    }
}

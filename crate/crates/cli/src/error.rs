use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI run, each mapped to a stable exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Input { path: PathBuf, source: h2sync::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Usage(String),

    #[error("solvability conditions violated: {0}")]
    Unsolvable(String),

    #[error(transparent)]
    Core(#[from] h2sync::Error),
}

impl CliError {
    pub const SOLVABILITY: u8 = 1;
    pub const INPUT: u8 = 2;
    pub const NUMERICAL: u8 = 3;

    pub fn exit_code(&self) -> u8 {
        use h2sync::Error as E;
        match self {
            CliError::Read { .. } | CliError::Input { .. } | CliError::Write { .. } | CliError::Usage(_) => {
                Self::INPUT
            }
            CliError::Unsolvable(_) => Self::SOLVABILITY,
            CliError::Core(e) => match e {
                E::PreconditionFailed { .. } => Self::SOLVABILITY,
                E::Parse { .. }
                | E::InvalidGraph(_)
                | E::ConfigInvalid(_)
                | E::DimensionMismatch(_)
                | E::RhoOutOfRange(_)
                | E::NonFinite(_) => Self::INPUT,
                _ => Self::NUMERICAL,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

use std::path::PathBuf;

use runoff::election::ElectionError;
use runoff::ingestion::IngestError;
use runoff::model::ModelError;
use thiserror::Error;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    Input = 1,
    Convergence = 2,
    OracleDisagreement = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Ingest {
        path: PathBuf,
        #[source]
        source: IngestError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Election(#[from] ElectionError),
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{count} kernel(s) missed the quadrature tolerance; see the status column")]
    Convergence { count: usize },
    #[error("{count} oracle comparison(s) with |z| > {threshold}")]
    OracleDisagreement { count: usize, threshold: f64 },
}

impl CliError {
    pub fn exit_status(&self) -> ExitStatus {
        match self {
            CliError::Convergence { .. } => ExitStatus::Convergence,
            CliError::OracleDisagreement { .. } => ExitStatus::OracleDisagreement,
            CliError::Election(ElectionError::Rank(e)) if e.best_estimate().is_some() => {
                ExitStatus::Convergence
            }
            // Majorities summing past one means the quadrature is off.
            CliError::Election(ElectionError::MajoritySum(_)) => ExitStatus::Convergence,
            _ => ExitStatus::Input,
        }
    }

    pub(crate) fn ingest(path: impl Into<PathBuf>, source: IngestError) -> Self {
        CliError::Ingest {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

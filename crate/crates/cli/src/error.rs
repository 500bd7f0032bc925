use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// Numerical failures keep their own class; anything else is reported as
/// `fallback`.
pub(crate) fn classify(err: wassbound::Error, fallback: fn(String) -> CliError) -> CliError {
    use wassbound::Error as E;
    match err {
        E::NonFinite(_) | E::NotPositiveDefinite(_) | E::Unstable(_) | E::Diverged { .. } | E::Unmet { .. } => {
            CliError::Numerical(err.to_string())
        }
        E::InvalidInput(_) | E::ShapeMismatch(_) => fallback(err.to_string()),
    }
}

pub(crate) fn config_err(err: wassbound::Error) -> CliError {
    classify(err, CliError::Config)
}

pub(crate) fn data_err(err: wassbound::Error) -> CliError {
    classify(err, CliError::Data)
}

pub type Result<T> = std::result::Result<T, CliError>;

use std::path::Path;

use thiserror::Error;

/// Failure classes, mapped to process exit codes by the binary.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or inconsistent inputs, unwritable outputs.
    #[error("{0}")]
    Usage(String),
    /// The numerics broke down on valid input.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Usage(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Numerical(_) => 2,
        }
    }

    /// Adds context such as the greedy step index.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            Self::Usage(m) => Self::Usage(format!("{what}: {m}")),
            Self::Numerical(m) => Self::Numerical(format!("{what}: {m}")),
        }
    }
}

impl From<dipole_ident::Error> for CliError {
    fn from(e: dipole_ident::Error) -> Self {
        use dipole_ident::Error as E;
        match e {
            E::EigenSolverFailure
            | E::IllConditionedBasis(_)
            | E::MonotonicityViolation { .. }
            | E::NonFiniteField(_) => Self::Numerical(e.to_string()),
            other => Self::Usage(other.to_string()),
        }
    }
}

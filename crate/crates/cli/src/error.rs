use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;
pub const EXIT_PARTIAL: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or inconsistent input: config, data files, flags.
    #[error("{0}")]
    Input(String),
    /// The computation itself failed.
    #[error("{0}")]
    Runtime(String),
    /// Output was written but the result is incomplete (solver did not
    /// converge, some windows failed).
    #[error("{0}")]
    Partial(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Partial(_) => EXIT_PARTIAL,
        }
    }

    pub fn input(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{context}: {e}"))
    }
}

impl From<acam_core::Error> for CliError {
    fn from(e: acam_core::Error) -> Self {
        use acam_core::Error as E;
        match e {
            E::IllConditioned { .. } | E::Diverged { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

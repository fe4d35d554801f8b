use thiserror::Error;

/// Process exit statuses.
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INTEGRITY: u8 = 3;
/// Run completed and artifacts were written, but the statistical check did
/// not find what it looked for.
pub const EXIT_NON_FINDING: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid {field}: {reason}")]
    Config { field: String, reason: String },
    #[error(transparent)]
    Core(#[from] shearmix::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(field: &str, reason: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        use shearmix::Error as E;
        match self {
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::Core(E::NumericalIntegrity(_)) => EXIT_INTEGRITY,
            CliError::Core(_) => EXIT_CONFIG,
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => EXIT_IO,
        }
    }
}

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] lqgvtr_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Machine-readable form written on failure.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
}

impl CliError {
    pub fn record(&self) -> ErrorRecord {
        let error = match self {
            CliError::Config(_) => "config",
            CliError::Core(lqgvtr_core::Error::SchemaMismatch(_)) => "schema_mismatch",
            CliError::Core(lqgvtr_core::Error::EmptyClass) => "empty_class",
            CliError::Core(lqgvtr_core::Error::NonConvergence { .. }) => "non_convergence",
            CliError::Core(_) => "library",
            CliError::Io(_) => "io",
            CliError::Json(_) | CliError::Toml(_) => "parse",
            CliError::Csv(_) => "csv",
        };
        ErrorRecord {
            error,
            message: self.to_string(),
        }
    }
}

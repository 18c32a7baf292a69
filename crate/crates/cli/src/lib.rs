//! Experiment runner: binds config files and flags to the library and
//! writes CSV/JSON artifacts with a checksummed manifest.

pub mod config;
pub mod error;
pub mod manifest;
pub mod runner;
pub mod summarize;

pub use config::{ExperimentConfig, Kind, Overrides};
pub use error::CliError;
pub use manifest::Manifest;
pub use runner::run;
pub use summarize::{summarize, Summary};

/// Caps the global thread pool from `LQGVTR_THREADS`, if set.
pub fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("LQGVTR_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("LQGVTR_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

//! Experiment drivers behind the command-line front end. Every command
//! writes plain CSV or text files whose bytes depend only on the inputs.

mod commands;
mod oracle;
mod sweep;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::{
    allocate_scenario, cmd_allocate, cmd_oracle, cmd_sweep, cmd_timeshare, gaps_path, sweep_scenario,
    timeshare_scenario, AllocateReport, TimeshareReport, GAP_REFERENCE,
};
pub use oracle::{run_oracle, OracleReport, OracleSpec};
pub use sweep::{
    check_dominance, parse_snr_range, receive_snr_energy, run_sweep, trial_seed, DominanceViolation, SweepReport,
    SweepRow, SweepSpec, TRIAL_SEED_PRIME,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("grid of {points:.3e} evaluations exceeds the budget of {budget:.3e}")]
    GridTooLarge { points: f64, budget: f64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn create_file(path: &Path) -> Result<std::fs::File, HarnessError> {
    std::fs::File::create(path).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.display().to_string(), source })?;
    Ok(dir.to_path_buf())
}

//! Desk-scale validation of the reduced model against the full-order
//! oracle: synthetic patients, the modify/compare protocol, agreement
//! statistics and report export.

pub mod report;
pub mod stats;
pub mod synth;
pub mod validation;

pub use report::{export_report, RunMetadata};
pub use stats::{compute_stats, StatsSummary, Stratifier};
pub use synth::{generate, LesionLabel, SynthConfig, SyntheticPatient};
pub use validation::{run_batch, run_case, BatchResult, CaseOutcome, ComparisonRecord, ValidationConfig};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] psrom_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

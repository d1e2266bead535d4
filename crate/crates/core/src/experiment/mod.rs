//! Declarative experiment runner: config files, presets, the
//! baseline/retrain/unlearn/evaluate grid, reports and verification.

mod config;
mod report;
mod run;
mod verify;

use std::path::Path;

pub use config::{
    parse_seed_list, preset, ArchConfig, DatasetSpec, ExperimentConfig, ForgetKind, ForgetSpec,
    StageConfig, PRESETS, SCHEMA_VERSION, SEED_ENV,
};
pub use report::{
    aggregate_rows, emit_report, mean_std, read_csv_report, report_rows, write_reports,
    AggregateRow, ReportFormat, ReportRow, REPORT_COLUMNS,
};
pub use run::{
    augment_dataset, load_datasets, run_experiment, RunEntry, RunManifest, RunStatus, MANIFEST_FILE,
};
pub use verify::{verify, VerifyReport};

use crate::error::{Error, Result};

/// Writes through a sibling temporary file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

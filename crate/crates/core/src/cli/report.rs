//! Run artifacts: summary JSON, iteration CSV, label image, config echo.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::cli::config::RunConfig;
use crate::cli::raster::{render_labels, RasterError};
use crate::optimizer::{RunReport, StageReport};

pub const REPORT_FILE: &str = "report.json";
pub const ITERATIONS_FILE: &str = "iterations.csv";
pub const LABELS_FILE: &str = "labels.pgm";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    seed: u64,
    phases: usize,
    final_energy_scaled: f64,
    stages: &'a [StageReport],
    warnings: &'a [String],
    config: &'a RunConfig,
}

/// Emit every artifact of `report` into `dir`, creating it if needed.
/// Returns the paths written.
pub fn write_report(report: &RunReport, config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ser = |e: &dyn std::fmt::Display| ReportError::Serialize(e.to_string());

    let summary = Summary {
        seed: report.seed,
        phases: report.system.len(),
        final_energy_scaled: report.stages.last().map_or(f64::NAN, |s| s.energy_scaled),
        stages: &report.stages,
        warnings: &report.warnings,
        config,
    };
    let report_path = dir.join(REPORT_FILE);
    let json = serde_json::to_vec_pretty(&summary).map_err(|e| ser(&e))?;
    write_atomic(&report_path, &json).map_err(io_err(&report_path))?;

    let csv_path = dir.join(ITERATIONS_FILE);
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.records {
        w.serialize(r).map_err(|e| ser(&e))?;
    }
    let bytes = w.into_inner().map_err(|e| ser(&e))?;
    write_atomic(&csv_path, &bytes).map_err(io_err(&csv_path))?;

    let labels_path = dir.join(LABELS_FILE);
    render_labels(&report.labels, &labels_path)?;

    let config_path = dir.join(CONFIG_FILE);
    let echo = serde_json::to_vec_pretty(config).map_err(|e| ser(&e))?;
    write_atomic(&config_path, &echo).map_err(io_err(&config_path))?;

    Ok(vec![report_path, csv_path, labels_path, config_path])
}

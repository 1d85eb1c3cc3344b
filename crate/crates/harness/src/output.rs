//! CSV and JSON export of sweep results.
//!
//! Floats are written with Rust's shortest round-trip formatting, so identical
//! results give byte-identical files.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::sweep::{CertifyReport, SweepResult, TrialRecord};

/// Version string written to manifests.
pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Columns of the per-sweep-value trial files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial_index: usize,
    pub s: usize,
    pub k: usize,
    pub relative_error: f64,
    pub epsilon_relative: f64,
    pub empirical_risk: f64,
    pub runtime_ms: f64,
}

impl From<&TrialRecord> for TrialRow {
    fn from(r: &TrialRecord) -> Self {
        Self {
            trial_index: r.trial_index,
            s: r.s,
            k: r.k,
            relative_error: r.relative_error,
            epsilon_relative: r.epsilon_relative,
            empirical_risk: r.empirical_risk,
            runtime_ms: r.runtime_ms,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct SummaryRow {
    s: usize,
    k: usize,
    trials_ok: usize,
    trials_failed: usize,
    has_failures: bool,
    relerr_median: f64,
    relerr_q1: f64,
    relerr_q3: f64,
    relerr_whisker_low: f64,
    relerr_whisker_high: f64,
    relerr_outliers: usize,
    epsrel_median: f64,
    epsrel_q1: f64,
    epsrel_q3: f64,
    epsrel_whisker_low: f64,
    epsrel_whisker_high: f64,
    epsrel_outliers: usize,
    mean_relative_error: f64,
    mean_epsilon: f64,
    mean_epsilon_relative: f64,
    mean_empirical_risk: f64,
    coverage: f64,
    kkt_coverage: f64,
}

/// Mean relative error (scaled by 10³) and mean absolute ε per K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepTable {
    pub k_values: Vec<usize>,
    pub avg_relative_error_x1e3: Vec<f64>,
    pub avg_epsilon: Vec<f64>,
}

pub fn summarize_k_sweep(records: &[TrialRecord], k_values: &[usize]) -> Result<KSweepTable> {
    let mut table = KSweepTable {
        k_values: k_values.to_vec(),
        avg_relative_error_x1e3: Vec::with_capacity(k_values.len()),
        avg_epsilon: Vec::with_capacity(k_values.len()),
    };
    for &k in k_values {
        let at_k: Vec<&TrialRecord> = records.iter().filter(|r| r.k == k).collect();
        if at_k.is_empty() {
            return Err(HarnessError::Config(format!("no records for K = {k}")));
        }
        let n = at_k.len() as f64;
        table
            .avg_relative_error_x1e3
            .push(1e3 * at_k.iter().map(|r| r.relative_error).sum::<f64>() / n);
        table
            .avg_epsilon
            .push(at_k.iter().map(|r| r.epsilon).sum::<f64>() / n);
    }
    Ok(table)
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| HarnessError::io(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_k_table(path: &Path, table: &KSweepTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["row".to_string()];
    header.extend(table.k_values.iter().map(|k| format!("K={k}")));
    w.write_record(&header)?;
    for (name, values) in [
        ("avg_relative_error_x1e-3", &table.avg_relative_error_x1e3),
        ("avg_epsilon", &table.avg_epsilon),
    ] {
        let mut row = vec![name.to_string()];
        row.extend(values.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

#[derive(Debug, Serialize)]
struct Manifest<'a, T: Serialize> {
    version: &'static str,
    config: &'a ExperimentConfig,
    wall_time_s: f64,
    quartiles: &'static str,
    whiskers: &'static str,
    seed_derivation: &'static str,
    execution_parallel: bool,
    result: T,
}

#[derive(Debug, Serialize)]
struct SweepMeta<'a> {
    info: &'a crate::sweep::RunInfo,
    failures: &'a [crate::sweep::TrialFailure],
}

fn manifest<T: Serialize>(cfg: &ExperimentConfig, wall_time_s: f64, result: T) -> Manifest<'_, T> {
    Manifest {
        version: VERSION,
        config: cfg,
        wall_time_s,
        quartiles: "linear interpolation between order statistics (type 7)",
        whiskers: "most extreme values within 1.5 IQR of the quartiles",
        seed_derivation: "splitmix64 finalizer: mix(mix(mix(seed) ^ stream) ^ trial)",
        execution_parallel: cfg.execution.is_parallel(),
        result,
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Writes the trial files, `trials_full.csv`, `summary.csv`, `k_table.csv`
/// (K sweeps) and `manifest.json`; returns the paths written.
pub fn write_sweep(cfg: &ExperimentConfig, result: &SweepResult, wall_time_s: f64) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let mut written = Vec::new();
    let by_s = cfg.experiment == Experiment::PevSweepS;
    let values = if by_s { &cfg.s_values } else { &cfg.k_values };
    for &v in values {
        let path = dir.join(if by_s {
            format!("trials_s{v}.csv")
        } else {
            format!("trials_k{v}.csv")
        });
        let rows = result
            .records
            .iter()
            .filter(|r| if by_s { r.s == v } else { r.k == v })
            .map(TrialRow::from);
        write_rows(&path, rows)?;
        written.push(path);
    }
    let full = dir.join("trials_full.csv");
    write_rows(&full, &result.records)?;
    written.push(full);

    let summary = dir.join("summary.csv");
    let nan = f64::NAN;
    write_rows(
        &summary,
        result.points.iter().map(|p| {
            let r = p.relative_error.as_ref();
            let e = p.epsilon_relative.as_ref();
            SummaryRow {
                s: p.s,
                k: p.k,
                trials_ok: p.trials_ok,
                trials_failed: p.trials_failed,
                has_failures: p.trials_failed > 0,
                relerr_median: r.map_or(nan, |b| b.median),
                relerr_q1: r.map_or(nan, |b| b.q1),
                relerr_q3: r.map_or(nan, |b| b.q3),
                relerr_whisker_low: r.map_or(nan, |b| b.whisker_low),
                relerr_whisker_high: r.map_or(nan, |b| b.whisker_high),
                relerr_outliers: r.map_or(0, |b| b.outliers.len()),
                epsrel_median: e.map_or(nan, |b| b.median),
                epsrel_q1: e.map_or(nan, |b| b.q1),
                epsrel_q3: e.map_or(nan, |b| b.q3),
                epsrel_whisker_low: e.map_or(nan, |b| b.whisker_low),
                epsrel_whisker_high: e.map_or(nan, |b| b.whisker_high),
                epsrel_outliers: e.map_or(0, |b| b.outliers.len()),
                mean_relative_error: p.mean_relative_error,
                mean_epsilon: p.mean_epsilon,
                mean_epsilon_relative: p.mean_epsilon_relative,
                mean_empirical_risk: p.mean_empirical_risk,
                coverage: p.coverage,
                kkt_coverage: p.kkt_coverage,
            }
        }),
    )?;
    written.push(summary);

    if matches!(cfg.experiment, Experiment::PevSweepK | Experiment::QpSweepK) {
        match summarize_k_sweep(&result.records, &cfg.k_values) {
            Ok(table) => {
                let path = dir.join("k_table.csv");
                write_k_table(&path, &table)?;
                written.push(path);
            }
            Err(e) => log::warn!("k_table.csv not written: {e}"),
        }
    }

    let path = dir.join("manifest.json");
    write_json(
        &path,
        &manifest(
            cfg,
            wall_time_s,
            SweepMeta {
                info: &result.info,
                failures: &result.failures,
            },
        ),
    )?;
    written.push(path);
    Ok(written)
}

/// Writes `certificate.json` and `manifest.json`.
pub fn write_certify(cfg: &ExperimentConfig, report: &CertifyReport, wall_time_s: f64) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let cert = dir.join("certificate.json");
    write_json(&cert, report)?;
    let path = dir.join("manifest.json");
    write_json(&path, &manifest(cfg, wall_time_s, &report.info))?;
    Ok(vec![cert, path])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(k: usize, relative_error: f64, epsilon: f64) -> TrialRecord {
        TrialRecord {
            trial_index: 0,
            s: 10,
            k,
            relative_error,
            epsilon_relative: epsilon,
            empirical_risk: 0.0,
            runtime_ms: 0.0,
            epsilon,
            kkt_distance: 0.0,
        }
    }

    #[test]
    fn single_record_table_equals_record() {
        let t = summarize_k_sweep(&[record(100, 0.002, 0.5)], &[100]).unwrap();
        assert_eq!(t.avg_relative_error_x1e3, vec![2.0]);
        assert_eq!(t.avg_epsilon, vec![0.5]);
    }

    #[test]
    fn missing_k_is_an_error() {
        assert!(summarize_k_sweep(&[record(100, 0.1, 1.0)], &[100, 1000]).is_err());
    }
}

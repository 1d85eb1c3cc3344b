//! Day-ahead price files and the synthetic price generator.
//!
//! A price file holds one day per row: `horizon` comma-separated prices with
//! `.` as decimal separator and no header. A first row whose leading field is
//! not numeric is skipped with a warning.

use std::f64::consts::TAU;
use std::fs::File;
use std::path::Path;

use fbcert_core::splitting::Dataset;
use log::warn;
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{HarnessError, Result};
use crate::seeds::trial_rng;

/// Hours per day covered by a price sample.
pub const PRICE_HORIZON: usize = 14;

/// Mean daily price profile: `0.05 + 0.03·sin(2πt/24)` €/kWh at hour `t`.
pub fn price_profile(hour: usize) -> f64 {
    0.05 + 0.03 * (TAU * hour as f64 / 24.0).sin()
}

/// Log-scale standard deviation of the multiplicative noise.
pub const PRICE_LOG_STD: f64 = 0.3;

pub fn load_prices(path: &Path) -> Result<Dataset> {
    load_prices_with_horizon(path, PRICE_HORIZON)
}

pub fn load_prices_with_horizon(path: &Path, horizon: usize) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: u64, message: String| HarnessError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row as u64 + 1, |p| p.line());
        if row == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            warn!("{}: skipping header row", path.display());
            continue;
        }
        if record.len() != horizon {
            return Err(parse_err(line, format!("expected {horizon} fields, found {}", record.len())));
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(col, field)| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(v) => Err(parse_err(line, format!("field {} is not finite: {v}", col + 1))),
                Err(_) => Err(parse_err(line, format!("field {} is not a number: {field:?}", col + 1))),
            })
            .collect::<Result<Vec<f64>>>()?;
        samples.push(DVector::from_vec(values));
    }
    if samples.is_empty() {
        return Err(parse_err(0, "no price rows".into()));
    }
    Ok(Dataset::new(samples)?)
}

/// Writes one sample per row with shortest round-trip formatting.
pub fn write_prices(path: &Path, prices: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for sample in prices.samples() {
        writer.write_record(sample.iter().map(|v| v.to_string()))?;
    }
    writer.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// `s` synthetic days: `price_t = profile(t) · exp(0.3·Z − 0.045)` with i.i.d.
/// standard normal `Z`, so every hour has mean `profile(t)`.
pub fn synth_prices(s: usize, horizon: usize, seed: u64) -> Result<Dataset> {
    if s == 0 || horizon == 0 {
        return Err(HarnessError::Config("synthetic prices need s >= 1 and horizon >= 1".into()));
    }
    let mut rng = trial_rng(seed, 0, 0);
    let shift = -0.5 * PRICE_LOG_STD * PRICE_LOG_STD;
    let samples = (0..s)
        .map(|_| {
            DVector::from_fn(horizon, |t, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                price_profile(t) * (PRICE_LOG_STD * z + shift).exp()
            })
        })
        .collect();
    Ok(Dataset::new(samples)?)
}

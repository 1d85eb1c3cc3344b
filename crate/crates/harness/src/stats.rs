//! Box-plot statistics with type-7 (linear interpolation) quartiles.

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Tukey box-plot summary. Whiskers end at the most extreme observations
/// inside `[q1 − 1.5·IQR, q3 + 1.5·IQR]`; everything beyond is an outlier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Type-7 sample quantile of ascending `sorted` data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(HarnessError::Config("box statistics need at least one value".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HarnessError::Config("box statistics need finite values".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&sorted, 0.25);
        let median = quantile_sorted(&sorted, 0.5);
        let q3 = quantile_sorted(&sorted, 0.75);
        let iqr = q3 - q1;
        let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside = || sorted.iter().copied().filter(|v| (fence_lo..=fence_hi).contains(v));
        Ok(Self {
            median,
            q1,
            q3,
            whisker_low: inside().fold(f64::INFINITY, f64::min),
            whisker_high: inside().fold(f64::NEG_INFINITY, f64::max),
            outliers: sorted
                .iter()
                .copied()
                .filter(|v| !(fence_lo..=fence_hi).contains(v))
                .collect(),
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::Oracle;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::splitting::Dataset;

/// Where the loss bound `ℓ̄` came from.
///
/// Only an analytic bound makes the resulting certificate sound; an empirical
/// maximum along a trajectory is a heuristic stand-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossBoundProvenance {
    Analytic,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBound {
    pub value: f64,
    pub provenance: LossBoundProvenance,
}

impl LossBound {
    pub fn analytic(value: f64) -> Self {
        Self {
            value,
            provenance: LossBoundProvenance::Analytic,
        }
    }

    pub fn empirical(value: f64) -> Self {
        Self {
            value,
            provenance: LossBoundProvenance::Empirical,
        }
    }

    /// `diam + 2γM`: bounds `‖x⁺ − γO(x⁺, ξ) − y‖` whenever consecutive
    /// iterates lie in a set of the given diameter and `‖O‖ ≤ M` there.
    pub fn from_diameter(diameter: f64, gamma: f64, bound_m: f64) -> Self {
        Self::analytic(diameter + 2.0 * gamma * bound_m)
    }
}

/// Regularity constants of the oracle: strong monotonicity `mu`, Lipschitz
/// modulus `kappa`, optional cocoercivity `theta`, norm bound `bound_m` and
/// the loss bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorConstants {
    pub mu: f64,
    pub kappa: f64,
    pub theta: Option<f64>,
    pub bound_m: f64,
    pub loss_bound: LossBound,
}

impl OperatorConstants {
    pub fn new(
        mu: f64,
        kappa: f64,
        theta: Option<f64>,
        bound_m: f64,
        loss_bound: LossBound,
    ) -> Result<Self> {
        let finite = [mu, kappa, bound_m, loss_bound.value, theta.unwrap_or(1.0)]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("operator constants must be finite".into()));
        }
        if mu < 0.0 || loss_bound.value < 0.0 {
            return Err(Error::InvalidArgument("mu and the loss bound must be >= 0".into()));
        }
        if kappa <= 0.0 || bound_m <= 0.0 || theta.is_some_and(|t| t <= 0.0) {
            return Err(Error::InvalidArgument("kappa, M and theta must be > 0".into()));
        }
        if mu > kappa {
            return Err(Error::InvalidArgument(format!(
                "strong monotonicity {mu} exceeds the Lipschitz modulus {kappa}"
            )));
        }
        Ok(Self {
            mu,
            kappa,
            theta,
            bound_m,
            loss_bound,
        })
    }

    /// Upper end of the admissible step-size interval `(0, 2μ/κ²)`.
    pub fn max_strong_step(&self) -> f64 {
        2.0 * self.mu / (self.kappa * self.kappa)
    }
}

/// `γ(2μ − γκ²)` with the admissibility checks shared by the two helpers below.
fn contraction_gap(gamma: f64, constants: &OperatorConstants) -> Result<f64> {
    let (mu, kappa) = (constants.mu, constants.kappa);
    if mu <= 0.0 {
        return Err(Error::Domain("contraction requires mu > 0".into()));
    }
    if mu > kappa {
        return Err(Error::Domain(format!("mu = {mu} exceeds kappa = {kappa}")));
    }
    let gap = gamma * (-gamma).mul_add(kappa * kappa, 2.0 * mu);
    if !(gamma > 0.0) || !(gap > 0.0) {
        return Err(Error::Domain(format!(
            "step {gamma} outside (0, 2mu/kappa^2) = (0, {})",
            constants.max_strong_step()
        )));
    }
    Ok(gap)
}

/// `τ = √(1 − γ(2μ − γκ²))`, the Lipschitz modulus of `Id − γO(·, ξ)` under
/// strong monotonicity.
pub fn contraction_factor(gamma: f64, constants: &OperatorConstants) -> Result<f64> {
    let gap = contraction_gap(gamma, constants)?;
    Ok((1.0 - gap).max(0.0).sqrt())
}

/// `1 − τ` without cancellation: `gap / (1 + τ)`.
pub fn one_minus_contraction(gamma: f64, constants: &OperatorConstants) -> Result<f64> {
    let gap = contraction_gap(gamma, constants)?;
    let tau = (1.0 - gap).max(0.0).sqrt();
    Ok(gap / (1.0 + tau))
}

/// One-sided empirical estimates of the oracle constants.
///
/// Over finitely many pairs the observed ratios can only under-estimate `kappa`
/// and `bound_m` and over-estimate `mu` and `theta`; they are a cross-check,
/// never a substitute for analytic constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedConstants {
    pub mu: f64,
    pub kappa: f64,
    pub theta: Option<f64>,
    pub bound_m: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
}

impl EstimatedConstants {
    pub fn to_operator_constants(&self, loss_bound: LossBound) -> Result<OperatorConstants> {
        OperatorConstants::new(self.mu.max(0.0), self.kappa, self.theta, self.bound_m, loss_bound)
    }
}

#[derive(Debug, Clone, Copy)]
struct PairStats {
    mu: f64,
    kappa: f64,
    theta: f64,
    bound_m: f64,
}

/// Estimates `(μ, κ, θ, M)` from `n_pairs` point pairs drawn with `sampler`,
/// evaluated against every sample of `dataset`. Degenerate pairs (`x = y`) are
/// skipped.
pub fn estimate_constants<O, S>(
    oracle: &O,
    mut sampler: S,
    dataset: &Dataset,
    n_pairs: usize,
    exec: Execution,
) -> Result<EstimatedConstants>
where
    O: Oracle + ?Sized,
    S: FnMut() -> DVector<f64>,
{
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("n_pairs must be >= 1".into()));
    }
    let pairs: Vec<(DVector<f64>, DVector<f64>)> =
        (0..n_pairs).map(|_| (sampler(), sampler())).collect();

    let per_pair: Vec<Option<PairStats>> = map_indexed(exec, pairs.len(), |p| {
        let (x, y) = &pairs[p];
        let d = x - y;
        let d2 = d.norm_squared();
        if d2 == 0.0 {
            return None;
        }
        let mut st = PairStats {
            mu: f64::INFINITY,
            kappa: 0.0,
            theta: f64::INFINITY,
            bound_m: 0.0,
        };
        for xi in dataset.samples() {
            let ox = oracle.eval(x, xi);
            let oy = oracle.eval(y, xi);
            let diff = &ox - &oy;
            let inner = d.dot(&diff);
            let diff2 = diff.norm_squared();
            st.mu = st.mu.min(inner / d2);
            st.kappa = st.kappa.max((diff2 / d2).sqrt());
            if diff2 > 0.0 {
                st.theta = st.theta.min(inner / diff2);
            }
            st.bound_m = st.bound_m.max(ox.norm()).max(oy.norm());
        }
        Some(st)
    });

    let used: Vec<PairStats> = per_pair.iter().flatten().copied().collect();
    if used.is_empty() {
        return Err(Error::Degenerate("every sampled pair had x = y".into()));
    }
    let mu = used.iter().map(|s| s.mu).fold(f64::INFINITY, f64::min);
    let kappa = used.iter().map(|s| s.kappa).fold(0.0, f64::max);
    let theta = used.iter().map(|s| s.theta).fold(f64::INFINITY, f64::min);
    let bound_m = used.iter().map(|s| s.bound_m).fold(0.0, f64::max);
    if !(kappa > 0.0) {
        return Err(Error::Degenerate(
            "oracle differences vanish on every pair (kappa = 0)".into(),
        ));
    }
    Ok(EstimatedConstants {
        mu,
        kappa,
        theta: (theta.is_finite() && theta > 0.0).then_some(theta),
        bound_m,
        pairs_used: used.len(),
        pairs_skipped: pairs.len() - used.len(),
    })
}

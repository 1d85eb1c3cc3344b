//! Uniform-stability constants, the exponential generalization bound and the
//! resulting ε-zero certificates, plus a posteriori residual checks.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::operators::{
    contraction_factor, one_minus_contraction, LossBound, LossBoundProvenance, OperatorConstants,
    Oracle, Resolvent,
};
use crate::splitting::{fb_run_data_with, loss, Dataset, RecordPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    StronglyMonotone,
    Cocoercive,
}

/// Which concentration inequality turns stability into a risk bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundForm {
    /// `r̂ + β + (sβ + ℓ̄)·√(2 ln(1/δ)/s)`.
    #[default]
    Replacement,
    /// `r̂ + 2β + (4sβ + ℓ̄)·√(ln(1/δ)/(2s))`, the removal-stability variant.
    Removal,
}

/// Probabilistic guarantee: with probability at least `1 − delta` the output
/// is an `epsilon`-zero. `epsilon · gamma` splits exactly into the three terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub epsilon: f64,
    pub delta: f64,
    pub s: usize,
    pub k: usize,
    pub gamma: f64,
    pub regime: Regime,
    pub bound_form: BoundForm,
    pub empirical_term: f64,
    pub stability_term: f64,
    pub deviation_term: f64,
    pub loss_bound_provenance: LossBoundProvenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_relative: Option<f64>,
}

impl Certificate {
    /// Attaches `epsilon / reference_norm`.
    pub fn with_reference_norm(mut self, reference_norm: f64) -> Result<Self> {
        if !(reference_norm > 0.0 && reference_norm.is_finite()) {
            return Err(Error::Degenerate(format!(
                "reference norm must be positive, got {reference_norm}"
            )));
        }
        self.epsilon_relative = Some(self.epsilon / reference_norm);
        Ok(self)
    }

    /// `empirical_term + stability_term + deviation_term`, i.e. `ε·γ`.
    pub fn total(&self) -> f64 {
        self.empirical_term + self.stability_term + self.deviation_term
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")))
    }
}

fn check_count(s: usize) -> Result<()> {
    if s == 0 {
        Err(Error::InvalidArgument("sample count s must be >= 1".into()))
    } else {
        Ok(())
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")))
    }
}

/// `2γM(1+τ) / (s(1−τ))`, the stability of the data-driven FB output under
/// strong monotonicity.
pub fn beta_strong(gamma: f64, constants: &OperatorConstants, s: usize) -> Result<f64> {
    check_count(s)?;
    let tau = contraction_factor(gamma, constants)?;
    let gap = one_minus_contraction(gamma, constants)?;
    if !(gap > 0.0) {
        return Err(Error::Domain(format!("contraction factor {tau} is not below 1")));
    }
    Ok(2.0 * gamma * constants.bound_m * (1.0 + tau) / (s as f64 * gap))
}

/// `4γMK / s`, the stability under cocoercivity after `k` iterations.
pub fn beta_coco(gamma: f64, bound_m: f64, k: usize, s: usize) -> Result<f64> {
    check_count(s)?;
    check_nonneg("gamma", gamma)?;
    check_nonneg("M", bound_m)?;
    Ok(4.0 * gamma * bound_m * k as f64 / s as f64)
}

/// `(empirical, stability, deviation)` terms of the bound.
fn bound_terms(
    form: BoundForm,
    empirical_risk: f64,
    beta: f64,
    loss_bound: f64,
    s: usize,
    delta: f64,
) -> Result<(f64, f64, f64)> {
    check_delta(delta)?;
    check_count(s)?;
    check_nonneg("empirical risk", empirical_risk)?;
    check_nonneg("beta", beta)?;
    check_nonneg("loss bound", loss_bound)?;
    let sf = s as f64;
    let log_inv = (1.0 / delta).ln();
    Ok(match form {
        BoundForm::Replacement => (
            empirical_risk,
            beta,
            sf.mul_add(beta, loss_bound) * (2.0 * log_inv / sf).sqrt(),
        ),
        BoundForm::Removal => (
            empirical_risk,
            2.0 * beta,
            (4.0 * sf).mul_add(beta, loss_bound) * (log_inv / (2.0 * sf)).sqrt(),
        ),
    })
}

/// `r̂ + β + (sβ + ℓ̄)·√(2 ln(1/δ)/s)`: holds with probability `≥ 1 − δ` for a
/// `β`-uniformly stable algorithm with loss bounded by `ℓ̄`.
pub fn generalization_bound(
    empirical_risk: f64,
    beta: f64,
    loss_bound: f64,
    s: usize,
    delta: f64,
) -> Result<f64> {
    generalization_bound_with(BoundForm::Replacement, empirical_risk, beta, loss_bound, s, delta)
}

pub fn generalization_bound_with(
    form: BoundForm,
    empirical_risk: f64,
    beta: f64,
    loss_bound: f64,
    s: usize,
    delta: f64,
) -> Result<f64> {
    let (e, st, dv) = bound_terms(form, empirical_risk, beta, loss_bound, s, delta)?;
    Ok(e + st + dv)
}

#[allow(clippy::too_many_arguments)]
fn certificate(
    regime: Regime,
    form: BoundForm,
    empirical_risk: f64,
    beta: f64,
    gamma: f64,
    loss_bound: LossBound,
    s: usize,
    k: usize,
    delta: f64,
) -> Result<Certificate> {
    let (empirical_term, stability_term, deviation_term) =
        bound_terms(form, empirical_risk, beta, loss_bound.value, s, delta)?;
    Ok(Certificate {
        epsilon: (empirical_term + stability_term + deviation_term) / gamma,
        delta,
        s,
        k,
        gamma,
        regime,
        bound_form: form,
        empirical_term,
        stability_term,
        deviation_term,
        loss_bound_provenance: loss_bound.provenance,
        epsilon_relative: None,
    })
}

/// ε-zero radius under strong monotonicity; independent of the iteration
/// count, which is recorded only.
pub fn epsilon_zero_strong(
    empirical_risk: f64,
    gamma: f64,
    constants: &OperatorConstants,
    s: usize,
    k: usize,
    delta: f64,
) -> Result<Certificate> {
    epsilon_zero_strong_with(BoundForm::Replacement, empirical_risk, gamma, constants, s, k, delta)
}

pub fn epsilon_zero_strong_with(
    form: BoundForm,
    empirical_risk: f64,
    gamma: f64,
    constants: &OperatorConstants,
    s: usize,
    k: usize,
    delta: f64,
) -> Result<Certificate> {
    check_delta(delta)?;
    let beta = beta_strong(gamma, constants, s)?;
    certificate(
        Regime::StronglyMonotone,
        form,
        empirical_risk,
        beta,
        gamma,
        constants.loss_bound,
        s,
        k,
        delta,
    )
}

/// ε-zero radius under cocoercivity after `k` iterations; affine increasing in `k`.
pub fn epsilon_zero_coco(
    empirical_risk: f64,
    gamma: f64,
    bound_m: f64,
    loss_bound: LossBound,
    s: usize,
    k: usize,
    delta: f64,
) -> Result<Certificate> {
    epsilon_zero_coco_with(BoundForm::Replacement, empirical_risk, gamma, bound_m, loss_bound, s, k, delta)
}

#[allow(clippy::too_many_arguments)]
pub fn epsilon_zero_coco_with(
    form: BoundForm,
    empirical_risk: f64,
    gamma: f64,
    bound_m: f64,
    loss_bound: LossBound,
    s: usize,
    k: usize,
    delta: f64,
) -> Result<Certificate> {
    check_delta(delta)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {gamma}")));
    }
    let beta = beta_coco(gamma, bound_m, k, s)?;
    certificate(Regime::Cocoercive, form, empirical_risk, beta, gamma, loss_bound, s, k, delta)
}

/// `‖J_{γA}(x − γB(x)) − x‖`; divided by `γ` it bounds the ε-zero residual.
pub fn fixed_point_residual<B, R>(x: &DVector<f64>, mean_op: B, resolvent: &R, gamma: f64) -> Result<f64>
where
    B: Fn(&DVector<f64>) -> DVector<f64>,
    R: Resolvent + ?Sized,
{
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {gamma}")));
    }
    let y = x - mean_op(x) * gamma;
    Ok((resolvent.resolve(&y)? - x).norm())
}

/// Which operator stood in for `B` in a residual check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanOperatorSource {
    /// The exact mean operator of a synthetic instance.
    GroundTruth,
    /// The empirical mean over the full sample pool.
    PoolMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualCheck {
    pub residual: f64,
    /// `residual / γ`.
    pub scaled_residual: f64,
    pub source: MeanOperatorSource,
    /// Whether `scaled_residual ≤ ε` of the certificate checked against.
    pub within_epsilon: bool,
}

/// Compares the a posteriori residual at `x` with a certificate's radius.
pub fn residual_check<B, R>(
    x: &DVector<f64>,
    mean_op: B,
    resolvent: &R,
    certificate: &Certificate,
    source: MeanOperatorSource,
) -> Result<ResidualCheck>
where
    B: Fn(&DVector<f64>) -> DVector<f64>,
    R: Resolvent + ?Sized,
{
    let residual = fixed_point_residual(x, mean_op, resolvent, certificate.gamma)?;
    let scaled_residual = residual / certificate.gamma;
    Ok(ResidualCheck {
        residual,
        scaled_residual,
        source,
        within_epsilon: scaled_residual <= certificate.epsilon,
    })
}

/// Setup shared by the runs of a replacement-stability experiment.
pub struct StabilityProbe<'a, O: ?Sized, R: ?Sized> {
    pub oracle: &'a O,
    pub resolvent: &'a R,
    pub x0: &'a DVector<f64>,
    pub gamma: f64,
    pub iterations: usize,
}

/// Largest `|ℓ(H_s, ξ) − ℓ(H_{s^i}, ξ)|` over the given replacements and test
/// samples, where `H_{s^i}` is trained on `dataset` with sample `i` swapped.
/// This is an empirical lower bound on the uniform stability constant.
pub fn empirical_stability<O, R>(
    probe: &StabilityProbe<'_, O, R>,
    dataset: &Dataset,
    replacements: &[(usize, DVector<f64>)],
    test_samples: &[DVector<f64>],
    exec: Execution,
) -> Result<f64>
where
    O: Oracle + ?Sized,
    R: Resolvent + ?Sized,
{
    let run = |d: &Dataset| {
        fb_run_data_with(
            probe.x0,
            d,
            probe.oracle,
            probe.resolvent,
            probe.gamma,
            probe.iterations,
            RecordPolicy::FinalOnly,
        )
        .map(|(h, _)| h)
    };
    let base = run(dataset)?;
    let base_losses: Vec<f64> = test_samples
        .iter()
        .map(|xi| loss(&base, xi, probe.oracle, probe.gamma))
        .collect();
    let per_replacement = map_indexed(exec, replacements.len(), |r| -> Result<f64> {
        let (index, sample) = &replacements[r];
        let h = run(&dataset.with_replaced(*index, sample.clone())?)?;
        Ok(test_samples
            .iter()
            .zip(&base_losses)
            .map(|(xi, l0)| (loss(&h, xi, probe.oracle, probe.gamma) - l0).abs())
            .fold(0.0, f64::max))
    });
    per_replacement
        .into_iter()
        .try_fold(0.0_f64, |acc, r| r.map(|v| acc.max(v)))
}

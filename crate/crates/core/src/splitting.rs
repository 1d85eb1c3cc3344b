//! Forward–backward iterations, exact and data-driven.
//!
//! The data-driven scheme replaces the operator `B` by the sample average of
//! oracle calls over a fixed dataset, after which the whole iteration is a
//! deterministic map from `(x⁰, dataset)` to the hypothesis `ω = (y^K, x^{K+1})`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numeric::{compensated_mean, compensated_sum, CompensatedSum};
use crate::operators::{LossBound, Oracle, Resolvent};

/// Iterates whose norm exceeds this are treated as divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Default cap on stored trajectory length.
pub const MAX_STORED_ITERATES: usize = 10_000;

/// An ordered collection of i.i.d. noise samples of common dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<DVector<f64>>,
}

impl Dataset {
    pub fn new(samples: Vec<DVector<f64>>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("dataset must hold at least one sample".into()))?;
        let d = first.len();
        for s in &samples {
            check_dim(d, s.len())?;
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_dim(&self) -> usize {
        self.samples[0].len()
    }

    /// Compensated mean of the samples in index order.
    pub fn mean(&self) -> DVector<f64> {
        compensated_mean(&self.samples)
    }

    /// Copy with sample `index` replaced by `sample`.
    pub fn with_replaced(&self, index: usize, sample: DVector<f64>) -> Result<Self> {
        if index >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "replacement index {index} out of range for {} samples",
                self.len()
            )));
        }
        check_dim(self.sample_dim(), sample.len())?;
        let mut samples = self.samples.clone();
        samples[index] = sample;
        Ok(Self { samples })
    }

    /// Dataset made of the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let picked = indices
            .iter()
            .map(|&i| {
                self.samples.get(i).cloned().ok_or_else(|| {
                    Error::InvalidArgument(format!("sample index {i} out of range"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(picked)
    }
}

/// FB state `ω = col(y, x)`: `y` before and `x` after the resolvent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub y: DVector<f64>,
    pub x: DVector<f64>,
}

impl Hypothesis {
    pub fn new(y: DVector<f64>, x: DVector<f64>) -> Result<Self> {
        check_dim(y.len(), x.len())?;
        Ok(Self { y, x })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Stacked `(y, x)` in `ℝ^{2n}`.
    pub fn omega(&self) -> DVector<f64> {
        let n = self.dim();
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&self.y);
        out.rows_mut(n, n).copy_from(&self.x);
        out
    }
}

/// Which iterates [`fb_run_data`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordPolicy {
    /// Every iterate while `K + 1 ≤ max_len`, otherwise every `⌈(K+1)/max_len⌉`-th.
    Thinned { max_len: usize },
    /// Only the final hypothesis.
    FinalOnly,
}

impl Default for RecordPolicy {
    fn default() -> Self {
        RecordPolicy::Thinned {
            max_len: MAX_STORED_ITERATES,
        }
    }
}

impl RecordPolicy {
    fn stride(self, updates: usize) -> usize {
        match self {
            RecordPolicy::Thinned { max_len } => updates.div_ceil(max_len.max(1)).max(1),
            RecordPolicy::FinalOnly => usize::MAX,
        }
    }
}

/// Stored iterates `ω^k` of a data-driven run. `hypotheses[j]` is `ω^{j·stride}`
/// except that the final `ω^K` is always the last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub hypotheses: Vec<Hypothesis>,
    pub iterations: usize,
    pub gamma: f64,
    pub stride: usize,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Hypothesis> {
        self.hypotheses.last()
    }
}

/// Sample-average approximation of `B` bound to one dataset.
///
/// Generic oracles are averaged call by call with compensated summation in
/// dataset order. Oracles affine in the noise are evaluated once at the
/// precomputed noise mean.
pub struct SampleAverage<'a, O: ?Sized> {
    oracle: &'a O,
    dataset: &'a Dataset,
    noise_mean: Option<DVector<f64>>,
}

impl<'a, O: Oracle + ?Sized> SampleAverage<'a, O> {
    pub fn new(oracle: &'a O, dataset: &'a Dataset) -> Self {
        let noise_mean = oracle.affine_in_noise().then(|| dataset.mean());
        Self {
            oracle,
            dataset,
            noise_mean,
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.noise_mean {
            Some(xi_bar) => self.oracle.eval(x, xi_bar),
            None => approx_operator_direct(x, self.oracle, self.dataset),
        }
    }
}

/// `B̂_s(x) = (1/s) Σᵢ O(x, ξ⁽ⁱ⁾)`.
pub fn approx_operator<O: Oracle + ?Sized>(
    x: &DVector<f64>,
    oracle: &O,
    dataset: &Dataset,
) -> DVector<f64> {
    SampleAverage::new(oracle, dataset).apply(x)
}

/// `B̂_s(x)` by explicit per-sample evaluation, whatever the oracle structure.
pub fn approx_operator_direct<O: Oracle + ?Sized>(
    x: &DVector<f64>,
    oracle: &O,
    dataset: &Dataset,
) -> DVector<f64> {
    let mut samples = dataset.samples().iter();
    let first = oracle.eval(x, samples.next().expect("datasets are nonempty"));
    let mut acc = CompensatedSum::zeros(first.len());
    acc.add(&first);
    for xi in samples {
        acc.add(&oracle.eval(x, xi));
    }
    acc.total() / dataset.len() as f64
}

fn check_step(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step size must be positive, got {gamma}")))
    }
}

/// One exact FB step: `y = x − γB(x)`, `x⁺ = J_{γA}(y)`.
pub fn fb_step_exact<B, R>(x: &DVector<f64>, b_op: B, resolvent: &R, gamma: f64) -> Result<Hypothesis>
where
    B: Fn(&DVector<f64>) -> DVector<f64>,
    R: Resolvent + ?Sized,
{
    check_step(gamma)?;
    let y = x - b_op(x) * gamma;
    let x_next = resolvent.resolve(&y)?;
    Hypothesis::new(y, x_next)
}

/// Runs the data-driven FB scheme for iterations `k = 0, …, K` and returns
/// `ω^K = (y^K, x^{K+1})` together with the recorded trajectory.
pub fn fb_run_data<O, R>(
    x0: &DVector<f64>,
    dataset: &Dataset,
    oracle: &O,
    resolvent: &R,
    gamma: f64,
    iterations: usize,
) -> Result<(Hypothesis, Trajectory)>
where
    O: Oracle + ?Sized,
    R: Resolvent + ?Sized,
{
    fb_run_data_with(x0, dataset, oracle, resolvent, gamma, iterations, RecordPolicy::default())
}

/// [`fb_run_data`] with an explicit recording policy.
pub fn fb_run_data_with<O, R>(
    x0: &DVector<f64>,
    dataset: &Dataset,
    oracle: &O,
    resolvent: &R,
    gamma: f64,
    iterations: usize,
    record: RecordPolicy,
) -> Result<(Hypothesis, Trajectory)>
where
    O: Oracle + ?Sized,
    R: Resolvent + ?Sized,
{
    check_step(gamma)?;
    if iterations == 0 {
        return Err(Error::InvalidArgument("iteration count K must be >= 1".into()));
    }
    let averaged = SampleAverage::new(oracle, dataset);
    let stride = record.stride(iterations + 1);
    let mut hypotheses = Vec::new();
    let mut x = x0.clone();
    let mut last = None;
    for k in 0..=iterations {
        let b_hat = averaged.apply(&x);
        check_dim(x.len(), b_hat.len())?;
        let y = &x - b_hat * gamma;
        let x_next = resolvent.resolve(&y)?;
        let norm = x_next.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration: k, norm });
        }
        let h = Hypothesis { y, x: x_next };
        x = h.x.clone();
        if record != RecordPolicy::FinalOnly && k < iterations && k % stride == 0 {
            hypotheses.push(h.clone());
        }
        last = Some(h);
    }
    let final_h = last.expect("at least one update runs");
    hypotheses.push(final_h.clone());
    Ok((
        final_h,
        Trajectory {
            hypotheses,
            iterations,
            gamma,
            stride,
        },
    ))
}

/// `ℓ(H, ξ) = ‖x − γO(x, ξ) − y‖`.
pub fn loss<O: Oracle + ?Sized>(h: &Hypothesis, xi: &DVector<f64>, oracle: &O, gamma: f64) -> f64 {
    let o = oracle.eval(&h.x, xi);
    (&h.x - o * gamma - &h.y).norm()
}

/// Mean loss over the dataset.
pub fn empirical_risk<O: Oracle + ?Sized>(
    h: &Hypothesis,
    dataset: &Dataset,
    oracle: &O,
    gamma: f64,
) -> f64 {
    let total = compensated_sum(dataset.samples().iter().map(|xi| loss(h, xi, oracle, gamma)));
    total / dataset.len() as f64
}

/// `(1 + margin) · max` loss over recorded hypotheses and dataset samples.
///
/// This is a heuristic stand-in for an analytic bound and is tagged as such.
pub fn estimate_loss_bound<O: Oracle + ?Sized>(
    trajectory: &Trajectory,
    dataset: &Dataset,
    oracle: &O,
    gamma: f64,
    margin: f64,
) -> Result<LossBound> {
    if trajectory.hypotheses.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    if !(margin >= 0.0) {
        return Err(Error::InvalidArgument("margin must be >= 0".into()));
    }
    let worst = trajectory
        .hypotheses
        .iter()
        .flat_map(|h| dataset.samples().iter().map(move |xi| loss(h, xi, oracle, gamma)))
        .fold(0.0_f64, f64::max);
    Ok(LossBound::empirical((1.0 + margin) * worst))
}

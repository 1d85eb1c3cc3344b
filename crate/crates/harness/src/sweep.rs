//! Seeded trial orchestration for the sweeps and the one-shot certificate.
//!
//! Trial `t` draws its training set for sample count `s` from a stream seeded
//! by `derive_seed(seed, s, t)`, so every K in a K-sweep sees the same data
//! for a given trial. PEV trials subsample the pool without replacement; QP
//! trials each draw a fresh instance from `derive_seed(seed, STREAM_INSTANCE, t)`
//! and fresh perturbations.

use std::collections::BTreeMap;
use std::time::Instant;

use fbcert_core::certificates::{
    epsilon_zero_coco, residual_check, Certificate, MeanOperatorSource, ResidualCheck,
};
use fbcert_core::exec::map_indexed;
use fbcert_core::games::{epsilon_sne_certificate, qp_generate, qp_reference, reference_sne, PevGame, QpInstance};
use fbcert_core::operators::{normal_cone_distance, Oracle, OperatorConstants};
use fbcert_core::splitting::{empirical_risk, fb_run_data_with, Dataset, Hypothesis, RecordPolicy};
use log::{info, warn};
use nalgebra::DVector;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, ExperimentConfig, Problem};
use crate::data::{load_prices, synth_prices, PRICE_HORIZON};
use crate::error::{HarnessError, Result};
use crate::seeds::{derive_seed, trial_rng, STREAM_GAME, STREAM_INSTANCE, STREAM_POOL};
use crate::stats::BoxStats;

/// One successful trial at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub s: usize,
    pub k: usize,
    /// `‖x^{K+1} − x*‖ / ‖x*‖`.
    pub relative_error: f64,
    pub epsilon_relative: f64,
    pub empirical_risk: f64,
    /// Zero unless runtime recording is enabled.
    pub runtime_ms: f64,
    pub epsilon: f64,
    /// Distance from `−B(x^{K+1})` to the normal cone at `x^{K+1}`, with `B`
    /// the ground-truth (QP) or pool-mean (PEV) operator.
    pub kkt_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial_index: usize,
    pub s: usize,
    pub k: usize,
    pub message: String,
}

/// Aggregates over the successful trials of one `(s, K)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub s: usize,
    pub k: usize,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub relative_error: Option<BoxStats>,
    pub epsilon_relative: Option<BoxStats>,
    pub mean_relative_error: f64,
    pub mean_epsilon: f64,
    pub mean_epsilon_relative: f64,
    pub mean_empirical_risk: f64,
    /// Fraction of trials with `relative_error ≤ epsilon_relative`.
    pub coverage: f64,
    /// Fraction of trials with `kkt_distance ≤ epsilon`.
    pub kkt_coverage: f64,
}

/// Shared, trial-independent inputs recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub problem: Problem,
    pub data_source: String,
    pub pool_size: Option<usize>,
    /// PEV constants over the whole pool; QP constants vary per trial.
    pub constants: Option<OperatorConstants>,
    pub reference_norm: Option<f64>,
    pub subsampling: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub info: RunInfo,
    /// Ordered by sweep point (s outer, K inner), then by trial.
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn records_at(&self, s: usize, k: usize) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(move |r| r.s == s && r.k == k)
    }

    pub fn point(&self, s: usize, k: usize) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.s == s && p.k == k)
    }
}

struct PevContext {
    game: PevGame,
    pool: Dataset,
    pool_mean: DVector<f64>,
    constants: OperatorConstants,
    x_star: DVector<f64>,
    x0: DVector<f64>,
    data_source: String,
}

enum Context {
    Pev(Box<PevContext>),
    Qp,
}

fn problem_of(cfg: &ExperimentConfig) -> Problem {
    match cfg.experiment {
        Experiment::PevSweepS | Experiment::PevSweepK => Problem::Pev,
        Experiment::QpSweepK => Problem::Qp,
        Experiment::Certify => cfg.problem,
    }
}

/// The PEV game, price pool and reference equilibrium of a configuration.
pub fn pev_setup(cfg: &ExperimentConfig) -> Result<(PevGame, Dataset, String)> {
    let game = match &cfg.instance_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            PevGame::from_toml(&text)?
        }
        None => PevGame::random(derive_seed(cfg.seed, STREAM_GAME, 0))?,
    };
    let (pool, source) = match &cfg.data_path {
        Some(path) => (load_prices(path)?, format!("file:{}", path.display())),
        None => {
            let seed = derive_seed(cfg.seed, STREAM_POOL, 0);
            (
                synth_prices(cfg.pool_size, PRICE_HORIZON, seed)?,
                format!("synthetic:{} days, seed {seed}", cfg.pool_size),
            )
        }
    };
    if pool.sample_dim() != game.horizon() {
        return Err(HarnessError::Config(format!(
            "price rows have {} hours but the game horizon is {}",
            pool.sample_dim(),
            game.horizon()
        )));
    }
    Ok((game, pool, source))
}

fn build_context(cfg: &ExperimentConfig) -> Result<Context> {
    match problem_of(cfg) {
        Problem::Qp => Ok(Context::Qp),
        Problem::Pev => {
            let (game, pool, data_source) = pev_setup(cfg)?;
            if let Some(&s) = cfg.s_values.iter().find(|&&s| s > pool.len()) {
                return Err(HarnessError::Config(format!(
                    "s = {s} exceeds the pool of {} samples",
                    pool.len()
                )));
            }
            let constants = game.analytic_constants(&pool, cfg.gamma)?;
            if cfg.gamma >= constants.max_strong_step() {
                return Err(HarnessError::Config(format!(
                    "gamma = {} is outside (0, 2μ/κ²) = (0, {})",
                    cfg.gamma,
                    constants.max_strong_step()
                )));
            }
            info!("computing the reference equilibrium on {} samples", pool.len());
            let x_star = reference_sne(&game, &pool, cfg.reference_tol)?;
            let x0 = game.default_start()?;
            let pool_mean = pool.mean();
            Ok(Context::Pev(Box::new(PevContext {
                game,
                pool,
                pool_mean,
                constants,
                x_star,
                x0,
                data_source,
            })))
        }
    }
}

fn run_info(cfg: &ExperimentConfig, ctx: &Context) -> RunInfo {
    match ctx {
        Context::Pev(p) => RunInfo {
            problem: Problem::Pev,
            data_source: p.data_source.clone(),
            pool_size: Some(p.pool.len()),
            constants: Some(p.constants),
            reference_norm: Some(p.x_star.norm()),
            subsampling: "uniform without replacement, independent per trial".into(),
        },
        Context::Qp => RunInfo {
            problem: Problem::Qp,
            data_source: format!("synthetic QP, n = {}, fresh instance per trial", cfg.qp_dim),
            pool_size: None,
            constants: None,
            reference_norm: None,
            subsampling: "fresh N(0, 0.25) perturbations per trial".into(),
        },
    }
}

fn final_hypothesis<O, R>(
    x0: &DVector<f64>,
    data: &Dataset,
    oracle: &O,
    resolvent: &R,
    gamma: f64,
    k: usize,
) -> Result<Hypothesis>
where
    O: Oracle + ?Sized,
    R: fbcert_core::operators::Resolvent + ?Sized,
{
    let (h, _) = fb_run_data_with(x0, data, oracle, resolvent, gamma, k, RecordPolicy::FinalOnly)?;
    Ok(h)
}

/// Everything a single `(trial, s, K)` run produces.
struct Outcome {
    record: TrialRecord,
    certificate: Certificate,
    residual: ResidualCheck,
    x: DVector<f64>,
}

fn pev_subsample(cfg: &ExperimentConfig, ctx: &PevContext, s: usize, trial: usize) -> Result<Dataset> {
    let mut rng = trial_rng(cfg.seed, s as u64, trial as u64);
    let picked = index::sample(&mut rng, ctx.pool.len(), s).into_vec();
    Ok(ctx.pool.subset(&picked)?)
}

fn pev_outcome(cfg: &ExperimentConfig, ctx: &PevContext, data: &Dataset, trial: usize, k: usize) -> Result<Outcome> {
    let start = Instant::now();
    let game = &ctx.game;
    let h = final_hypothesis(&ctx.x0, data, game, game.sets(), cfg.gamma, k)?;
    let certificate = epsilon_sne_certificate(&h, game, data, cfg.gamma, cfg.delta, k, &ctx.constants)?
        .with_reference_norm(ctx.x_star.norm())?;
    let runtime = start.elapsed();
    let mean_op = |x: &DVector<f64>| game.eval(x, &ctx.pool_mean);
    let kkt_distance = normal_cone_distance(&h.x, &mean_op(&h.x), game.sets())?;
    let residual = residual_check(&h.x, mean_op, game.sets(), &certificate, MeanOperatorSource::PoolMean)?;
    let relative_error = (&h.x - &ctx.x_star).norm() / ctx.x_star.norm();
    Ok(outcome(cfg, trial, data, k, h, certificate, residual, relative_error, kkt_distance, runtime))
}

struct QpTrial {
    instance: QpInstance,
    x_star: DVector<f64>,
}

fn qp_trial(cfg: &ExperimentConfig, trial: usize) -> Result<QpTrial> {
    let instance = qp_generate(cfg.qp_dim, derive_seed(cfg.seed, STREAM_INSTANCE, trial as u64))?;
    let x_star = qp_reference(&instance, cfg.reference_tol)?;
    if x_star.norm() == 0.0 {
        return Err(fbcert_core::Error::Degenerate(
            "QP reference solution is the origin; relative quantities are undefined".into(),
        )
        .into());
    }
    Ok(QpTrial { instance, x_star })
}

fn qp_outcome(cfg: &ExperimentConfig, qp: &QpTrial, data: &Dataset, trial: usize, k: usize) -> Result<Outcome> {
    let start = Instant::now();
    let inst = &qp.instance;
    let x0 = DVector::zeros(inst.dim());
    let h = final_hypothesis(&x0, data, inst, &inst.bounds, cfg.gamma, k)?;
    let bound_m = inst.operator_bound(data)?;
    let risk = empirical_risk(&h, data, inst, cfg.gamma);
    let certificate = epsilon_zero_coco(
        risk,
        cfg.gamma,
        bound_m,
        inst.loss_bound(cfg.gamma, bound_m),
        data.len(),
        k,
        cfg.delta,
    )?
    .with_reference_norm(qp.x_star.norm())?;
    let runtime = start.elapsed();
    let mean_op = |x: &DVector<f64>| inst.mean_operator(x);
    let kkt_distance = normal_cone_distance(&h.x, &mean_op(&h.x), &inst.bounds)?;
    let residual = residual_check(&h.x, mean_op, &inst.bounds, &certificate, MeanOperatorSource::GroundTruth)?;
    let relative_error = (&h.x - &qp.x_star).norm() / qp.x_star.norm();
    Ok(outcome(cfg, trial, data, k, h, certificate, residual, relative_error, kkt_distance, runtime))
}

#[allow(clippy::too_many_arguments)]
fn outcome(
    cfg: &ExperimentConfig,
    trial: usize,
    data: &Dataset,
    k: usize,
    h: Hypothesis,
    certificate: Certificate,
    residual: ResidualCheck,
    relative_error: f64,
    kkt_distance: f64,
    runtime: std::time::Duration,
) -> Outcome {
    let runtime_ms = if cfg.record_runtime {
        runtime.as_secs_f64() * 1e3
    } else {
        0.0
    };
    Outcome {
        record: TrialRecord {
            trial_index: trial,
            s: data.len(),
            k,
            relative_error,
            epsilon_relative: certificate.epsilon_relative.unwrap_or(f64::NAN),
            empirical_risk: certificate.empirical_term,
            runtime_ms,
            epsilon: certificate.epsilon,
            kkt_distance,
        },
        certificate,
        residual,
        x: h.x,
    }
}

type PointResult = std::result::Result<TrialRecord, TrialFailure>;

/// Every `(s, K)` point of one trial, `s` outer and `K` inner.
fn run_trial(cfg: &ExperimentConfig, ctx: &Context, trial: usize) -> Vec<PointResult> {
    let fail_all = |s: usize, message: &str| -> Vec<PointResult> {
        cfg.k_values
            .iter()
            .map(|&k| {
                Err(TrialFailure {
                    trial_index: trial,
                    s,
                    k,
                    message: message.to_string(),
                })
            })
            .collect()
    };
    let qp = match ctx {
        Context::Qp => match qp_trial(cfg, trial) {
            Ok(qp) => Some(qp),
            Err(e) => return cfg.s_values.iter().flat_map(|&s| fail_all(s, &e.to_string())).collect(),
        },
        Context::Pev(_) => None,
    };
    let mut out = Vec::with_capacity(cfg.s_values.len() * cfg.k_values.len());
    for &s in &cfg.s_values {
        let data = match (ctx, &qp) {
            (Context::Pev(p), _) => pev_subsample(cfg, p, s, trial),
            (Context::Qp, Some(q)) => q
                .instance
                .draw_perturbations(s, derive_seed(cfg.seed, s as u64, trial as u64))
                .map_err(HarnessError::from),
            (Context::Qp, None) => unreachable!("QP trial set up above"),
        };
        let data = match data {
            Ok(d) => d,
            Err(e) => {
                out.extend(fail_all(s, &e.to_string()));
                continue;
            }
        };
        for &k in &cfg.k_values {
            let result = match (ctx, &qp) {
                (Context::Pev(p), _) => pev_outcome(cfg, p, &data, trial, k),
                (Context::Qp, Some(q)) => qp_outcome(cfg, q, &data, trial, k),
                (Context::Qp, None) => unreachable!("QP trial set up above"),
            };
            out.push(result.map(|o| o.record).map_err(|e| {
                warn!("trial {trial} at s = {s}, K = {k} failed: {e}");
                TrialFailure {
                    trial_index: trial,
                    s,
                    k,
                    message: e.to_string(),
                }
            }));
        }
    }
    out
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn fraction(hits: usize, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        hits as f64 / n as f64
    }
}

fn aggregate(cfg: &ExperimentConfig, records: &[TrialRecord], failures: &[TrialFailure]) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::new();
    for &s in &cfg.s_values {
        for &k in &cfg.k_values {
            let recs: Vec<&TrialRecord> = records.iter().filter(|r| r.s == s && r.k == k).collect();
            let failed = failures.iter().filter(|f| f.s == s && f.k == k).count();
            let stats = |f: fn(&TrialRecord) -> f64| -> Result<Option<BoxStats>> {
                if recs.is_empty() {
                    return Ok(None);
                }
                BoxStats::from_values(&recs.iter().map(|r| f(r)).collect::<Vec<_>>()).map(Some)
            };
            points.push(SweepPoint {
                s,
                k,
                trials_ok: recs.len(),
                trials_failed: failed,
                relative_error: stats(|r| r.relative_error)?,
                epsilon_relative: stats(|r| r.epsilon_relative)?,
                mean_relative_error: mean(recs.iter().map(|r| r.relative_error)),
                mean_epsilon: mean(recs.iter().map(|r| r.epsilon)),
                mean_epsilon_relative: mean(recs.iter().map(|r| r.epsilon_relative)),
                mean_empirical_risk: mean(recs.iter().map(|r| r.empirical_risk)),
                coverage: fraction(
                    recs.iter().filter(|r| r.relative_error <= r.epsilon_relative).count(),
                    recs.len(),
                ),
                kkt_coverage: fraction(recs.iter().filter(|r| r.kkt_distance <= r.epsilon).count(), recs.len()),
            });
        }
    }
    Ok(points)
}

/// Runs every trial of a sweep. Trial failures are collected, not fatal;
/// setup errors (unreadable data, inadmissible step size) are.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let ctx = build_context(cfg)?;
    info!(
        "{} trials over s = {:?}, K = {:?}",
        cfg.trials, cfg.s_values, cfg.k_values
    );
    let per_trial = map_indexed(cfg.execution, cfg.trials, |t| run_trial(cfg, &ctx, t));
    let mut by_point: BTreeMap<(usize, usize), Vec<TrialRecord>> = BTreeMap::new();
    let mut failures = Vec::new();
    for results in per_trial {
        for r in results {
            match r {
                Ok(rec) => by_point.entry((rec.s, rec.k)).or_default().push(rec),
                Err(f) => failures.push(f),
            }
        }
    }
    let mut records = Vec::new();
    for &s in &cfg.s_values {
        for &k in &cfg.k_values {
            records.extend(by_point.remove(&(s, k)).unwrap_or_default());
        }
    }
    failures.sort_by_key(|f| (f.s, f.k, f.trial_index));
    let points = aggregate(cfg, &records, &failures)?;
    Ok(SweepResult {
        info: run_info(cfg, &ctx),
        records,
        failures,
        points,
    })
}

/// Result of `certify`: one run, its certificate and the a posteriori check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub info: RunInfo,
    pub record: TrialRecord,
    pub certificate: Certificate,
    pub residual: ResidualCheck,
    pub x: Vec<f64>,
}

/// A single trial (index 0) at the configured `(s, K)`.
pub fn certify(cfg: &ExperimentConfig) -> Result<CertifyReport> {
    cfg.validate()?;
    let (s, k) = (cfg.s_values[0], cfg.k_values[0]);
    let ctx = build_context(cfg)?;
    let outcome = match &ctx {
        Context::Pev(p) => {
            let data = pev_subsample(cfg, p, s, 0)?;
            pev_outcome(cfg, p, &data, 0, k)?
        }
        Context::Qp => {
            let qp = qp_trial(cfg, 0)?;
            let data = qp.instance.draw_perturbations(s, derive_seed(cfg.seed, s as u64, 0))?;
            qp_outcome(cfg, &qp, &data, 0, k)?
        }
    };
    Ok(CertifyReport {
        info: run_info(cfg, &ctx),
        record: outcome.record,
        certificate: outcome.certificate,
        residual: outcome.residual,
        x: outcome.x.iter().copied().collect(),
    })
}

//! Experiment configuration: defaults per experiment, TOML files, overrides.

use std::path::{Path, PathBuf};

use fbcert_core::Execution;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    PevSweepS,
    PevSweepK,
    QpSweepK,
    Certify,
}

/// Which benchmark a one-shot certification runs on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    #[default]
    Pev,
    Qp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub problem: Problem,
    pub s_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub trials: usize,
    pub delta: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Price CSV; a synthetic pool of `pool_size` days is used when absent.
    pub data_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// PEV instance file; the random 20-agent instance is used when absent.
    pub instance_path: Option<PathBuf>,
    pub pool_size: usize,
    pub qp_dim: usize,
    /// Residual tolerance of the reference solvers.
    pub reference_tol: f64,
    /// Write measured wall-clock times instead of 0 to `runtime_ms`.
    pub record_runtime: bool,
    pub execution: Execution,
}

/// Optional keys, as read from a config file or the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub experiment: Option<Experiment>,
    pub problem: Option<Problem>,
    pub s_values: Option<Vec<usize>>,
    pub k_values: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub data_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub instance_path: Option<PathBuf>,
    pub pool_size: Option<usize>,
    pub qp_dim: Option<usize>,
    pub reference_tol: Option<f64>,
    pub record_runtime: Option<bool>,
    pub execution: Option<Execution>,
}

impl ConfigOverrides {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        toml::from_str(&text).map_err(|e| HarnessError::Toml {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Default master seed.
pub const DEFAULT_SEED: u64 = 20_240_611;

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let (s_values, k_values, gamma) = match experiment {
            Experiment::PevSweepS => (vec![100, 500, 1000, 2000, 3000], vec![1000], 0.02),
            Experiment::PevSweepK => (vec![3000], vec![100, 500, 1000, 5000, 10_000], 0.02),
            Experiment::QpSweepK => (vec![10_000], vec![100, 500, 1000, 5000, 10_000], 0.01),
            Experiment::Certify => (vec![3000], vec![1000], 0.02),
        };
        Self {
            experiment,
            problem: Problem::Pev,
            s_values,
            k_values,
            trials: 50,
            delta: 0.05,
            gamma,
            seed: DEFAULT_SEED,
            data_path: None,
            output_dir: PathBuf::from("out"),
            instance_path: None,
            pool_size: 3649,
            qp_dim: 10,
            reference_tol: 1e-10,
            record_runtime: false,
            execution: Execution::default(),
        }
    }

    /// Defaults of the experiment named by `overrides` (or `fallback`), then
    /// every key present in `overrides`. For `certify` with `problem = "qp"`
    /// the QP step size and sample count become the defaults.
    pub fn resolve(fallback: Experiment, overrides: &ConfigOverrides) -> Self {
        let experiment = overrides.experiment.unwrap_or(fallback);
        let mut cfg = Self::defaults(experiment);
        if experiment == Experiment::Certify && overrides.problem == Some(Problem::Qp) {
            let qp = Self::defaults(Experiment::QpSweepK);
            cfg.gamma = qp.gamma;
            cfg.s_values = qp.s_values;
        }
        cfg.apply(overrides);
        cfg
    }

    pub fn apply(&mut self, o: &ConfigOverrides) {
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = &o.$field {
                    self.$field = v.clone();
                }
            )*};
        }
        take!(experiment, problem, s_values, k_values, trials, delta, gamma, seed, output_dir, pool_size, qp_dim, reference_tol, record_runtime, execution);
        if o.data_path.is_some() {
            self.data_path = o.data_path.clone();
        }
        if o.instance_path.is_some() {
            self.instance_path = o.instance_path.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.s_values.is_empty() || self.k_values.is_empty() {
            return bad("s_values and k_values must be nonempty".into());
        }
        if self.s_values.contains(&0) {
            return bad("every s must be >= 1".into());
        }
        if self.k_values.contains(&0) {
            return bad("every K must be >= 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.reference_tol > 0.0) {
            return bad("reference_tol must be positive".into());
        }
        if self.qp_dim == 0 || self.pool_size == 0 {
            return bad("qp_dim and pool_size must be >= 1".into());
        }
        let single = |name: &str, v: &[usize]| {
            if v.len() == 1 {
                Ok(())
            } else {
                bad(format!("{:?} takes exactly one {name} value", self.experiment))
            }
        };
        match self.experiment {
            Experiment::PevSweepS => single("K", &self.k_values),
            Experiment::PevSweepK | Experiment::QpSweepK => single("s", &self.s_values),
            Experiment::Certify => {
                single("s", &self.s_values)?;
                single("K", &self.k_values)
            }
        }
    }
}

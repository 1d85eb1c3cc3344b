use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fbcert_core::Execution;
use fbcert_harness::config::{ConfigOverrides, Experiment, ExperimentConfig, Problem};
use fbcert_harness::data::{synth_prices, write_prices, PRICE_HORIZON};
use fbcert_harness::output::{write_certify, write_sweep};
use fbcert_harness::sweep::{certify, run_sweep};

#[derive(Parser)]
#[command(name = "fbcert", version, about = "Data-driven forward-backward experiments with finite-sample certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// PEV game, sweep over the number of samples s.
    PevSweepS(RunArgs),
    /// PEV game, sweep over the number of iterations K.
    PevSweepK(RunArgs),
    /// Random box-constrained QP, sweep over K.
    QpSweepK(RunArgs),
    /// One run with its certificate and a posteriori residual check.
    Certify(RunArgs),
    /// Write synthetic day-ahead prices.
    GenData(GenDataArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with experiment keys; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Price CSV (14 prices per row); synthetic prices when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Sample counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    s: Option<Vec<usize>>,
    /// Iteration counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// PEV instance TOML.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Benchmark for `certify`.
    #[arg(long, value_enum)]
    problem: Option<Problem>,
    /// Run trials on one thread.
    #[arg(long)]
    sequential: bool,
    /// Record per-trial wall-clock time in `runtime_ms`.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct GenDataArgs {
    /// Number of days.
    #[arg(long, default_value_t = 3649)]
    s: usize,
    #[arg(long, default_value_t = fbcert_harness::config::DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn resolve(&self, experiment: Experiment) -> Result<ExperimentConfig> {
        let mut overrides = match &self.config {
            Some(path) => ConfigOverrides::from_file(path)?,
            None => ConfigOverrides::default(),
        };
        if overrides.experiment.is_some_and(|e| e != experiment) {
            anyhow::bail!("config file names a different experiment than the subcommand");
        }
        overrides.experiment = Some(experiment);
        if overrides.problem.is_none() {
            overrides.problem = self.problem;
        }
        let mut cfg = ExperimentConfig::resolve(experiment, &overrides);
        let flags = ConfigOverrides {
            problem: self.problem,
            s_values: self.s.clone(),
            k_values: self.k.clone(),
            trials: self.trials,
            delta: self.delta,
            gamma: self.gamma,
            seed: self.seed,
            data_path: self.data.clone(),
            output_dir: self.out.clone(),
            instance_path: self.instance.clone(),
            record_runtime: self.timing.then_some(true),
            execution: self.sequential.then_some(Execution::Sequential),
            ..ConfigOverrides::default()
        };
        cfg.apply(&flags);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(experiment: Experiment, args: &RunArgs) -> Result<()> {
    let cfg = args.resolve(experiment)?;
    let start = Instant::now();
    let written = if experiment == Experiment::Certify {
        let report = certify(&cfg)?;
        let c = &report.certificate;
        println!(
            "epsilon = {} (relative {}), relative error = {}, residual/gamma = {} ({})",
            c.epsilon,
            report.record.epsilon_relative,
            report.record.relative_error,
            report.residual.scaled_residual,
            if report.residual.within_epsilon { "within epsilon" } else { "exceeds epsilon" }
        );
        write_certify(&cfg, &report, start.elapsed().as_secs_f64())?
    } else {
        let result = run_sweep(&cfg)?;
        for p in &result.points {
            println!(
                "s = {:>5}, K = {:>5}: {} ok, {} failed, mean relative error {:.4e}, mean epsilon {:.4e}, coverage {:.2}",
                p.s, p.k, p.trials_ok, p.trials_failed, p.mean_relative_error, p.mean_epsilon, p.coverage
            );
        }
        write_sweep(&cfg, &result, start.elapsed().as_secs_f64())?
    };
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::PevSweepS(a) => run(Experiment::PevSweepS, &a),
        Command::PevSweepK(a) => run(Experiment::PevSweepK, &a),
        Command::QpSweepK(a) => run(Experiment::QpSweepK, &a),
        Command::Certify(a) => run(Experiment::Certify, &a),
        Command::GenData(a) => {
            let prices = synth_prices(a.s, PRICE_HORIZON, a.seed)?;
            write_prices(&a.out, &prices).with_context(|| format!("writing {}", a.out.display()))?;
            println!("wrote {} days to {}", a.s, a.out.display());
            Ok(())
        }
    }
}

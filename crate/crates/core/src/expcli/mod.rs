//! Command-line experiment driver.
//!
//! `msl <subcommand> [--config file.json] [flags]` resolves an
//! [`ExperimentConfig`] into [`Settings`], runs the experiment and writes its
//! CSVs plus a `summary.json` under `--out`.

pub mod config;
pub mod experiments;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::{Experiment, ExperimentConfig, Settings};

use crate::error::{Error, Result};

/// Version string in `git describe` style, fixed at build time.
pub const VERSION: &str = env!("MSL_VERSION");

#[derive(Debug, Serialize)]
pub struct Summary {
    pub experiment: Experiment,
    pub version: &'static str,
    /// First base seed; `seeds` lists all of them.
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub wall_time_s: f64,
    pub jobs: usize,
    pub config: Settings,
    pub results: serde_json::Value,
}

/// Runs one experiment on a pool of `jobs` threads and writes `summary.json`.
pub fn run_experiment(settings: &Settings, jobs: usize) -> Result<Summary> {
    experiments::ensure_dir(&settings.out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config {
            field: "--jobs".into(),
            message: e.to_string(),
        })?;
    let start = Instant::now();
    let results = pool.install(|| -> Result<serde_json::Value> {
        use experiments::*;
        let s = settings;
        Ok(match s.experiment {
            Experiment::Run => serde_json::to_value(exp_run(s)?)?,
            Experiment::ImbalanceAlpha => serde_json::to_value(exp_imbalance_alpha(s)?)?,
            Experiment::Traintest => serde_json::to_value(exp_traintest(s)?)?,
            Experiment::ErrorAlpha => serde_json::to_value(exp_error_alpha(s)?)?,
            Experiment::ImbalanceStepsize => serde_json::to_value(exp_imbalance_stepsize(s)?)?,
            Experiment::Coupling => serde_json::to_value(exp_coupling(s)?)?,
            Experiment::LemmaAudit => serde_json::to_value(exp_lemma_audit(s)?)?,
            Experiment::RipProbe => serde_json::to_value(exp_rip_probe(s)?)?,
            Experiment::PowerCompare => serde_json::to_value(exp_power_compare(s)?)?,
        })
    })?;
    let summary = Summary {
        experiment: settings.experiment,
        version: VERSION,
        seed: settings.seeds[0],
        seeds: settings.seeds.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
        jobs: jobs.max(1),
        config: settings.clone(),
        results,
    };
    output::write_json(&settings.out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Parser)]
#[command(name = "msl", version = VERSION, about = "Low-rank matrix sensing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single trajectories, one CSV per seed and grid point.
    Run(Flags),
    /// Imbalance over time for several initialization scales, empirical and population.
    ImbalanceAlpha(Flags),
    /// Train and test error for a large and a small initialization.
    Traintest(Flags),
    /// Final test error against the initialization scale, with a log-log fit.
    ErrorAlpha(Flags),
    /// Plateau imbalance against the step size, with a linear fit.
    ImbalanceStepsize(Flags),
    /// Nuisance and angle parts of the imbalance along one run.
    Coupling(Flags),
    /// Checks the lemma inequalities along one run.
    LemmaAudit(Flags),
    /// Lower estimate of the restricted isometry constant.
    RipProbe(Flags),
    /// Early iterates against the power method.
    PowerCompare(Flags),
}

impl Command {
    fn split(self) -> (Experiment, Flags) {
        match self {
            Command::Run(f) => (Experiment::Run, f),
            Command::ImbalanceAlpha(f) => (Experiment::ImbalanceAlpha, f),
            Command::Traintest(f) => (Experiment::Traintest, f),
            Command::ErrorAlpha(f) => (Experiment::ErrorAlpha, f),
            Command::ImbalanceStepsize(f) => (Experiment::ImbalanceStepsize, f),
            Command::Coupling(f) => (Experiment::Coupling, f),
            Command::LemmaAudit(f) => (Experiment::LemmaAudit, f),
            Command::RipProbe(f) => (Experiment::RipProbe, f),
            Command::PowerCompare(f) => (Experiment::PowerCompare, f),
        }
    }
}

#[derive(Debug, clap::Args)]
struct Flags {
    /// JSON file with experiment settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    /// Number of measurements.
    #[arg(long)]
    m: Option<usize>,
    /// Factor width.
    #[arg(long)]
    k: Option<usize>,
    /// Initialization scales, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    alpha: Option<Vec<f64>>,
    /// Step sizes in units of 1/||X||, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    mu_rel: Option<Vec<f64>>,
    /// Base seeds, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    seed: Option<Vec<u64>>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fill the delta_norm column.
    #[arg(long)]
    with_delta: bool,
    #[arg(long)]
    record_every: Option<usize>,
    /// Stride between records carrying delta_norm.
    #[arg(long)]
    delta_every: Option<usize>,
    /// Training-loss stop; 0 disables it.
    #[arg(long)]
    stop_train_loss: Option<f64>,
    /// Use the population operator (A*A = identity).
    #[arg(long)]
    population: bool,
    #[arg(long)]
    audit_every: Option<usize>,
    #[arg(long)]
    rip_every: Option<usize>,
    #[arg(long)]
    rip_trials: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    rip_order: Option<Vec<usize>>,
    /// Horizon for power-compare.
    #[arg(long)]
    t_max: Option<usize>,
    /// Worker threads for sweeps.
    #[arg(long, env = "MSL_JOBS", default_value_t = 1)]
    jobs: usize,
}

impl Flags {
    fn as_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            experiment: None,
            n1: self.n1,
            n2: self.n2,
            r: self.r,
            m: self.m,
            k: self.k,
            alphas: self.alpha.clone(),
            mus_times_norm_x: self.mu_rel.clone(),
            seeds: self.seed.clone(),
            max_iters: self.max_iters,
            out_dir: self.out.clone(),
            with_delta: self.with_delta.then_some(true),
            record_every: self.record_every,
            delta_every: self.delta_every,
            stop_train_loss: self.stop_train_loss,
            population: self.population.then_some(true),
            lemma_constants: None,
            audit_every: self.audit_every,
            rip_every: self.rip_every,
            rip_trials: self.rip_trials,
            rip_orders: self.rip_order.clone(),
            t_max: self.t_max,
        }
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidParameter { .. } | Error::InvalidDimension(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (program name first), runs the experiment and returns the
/// exit code: 0 on success, 1 on divergence or I/O failure, 2 on usage or
/// configuration errors.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (experiment, flags) = cli.command.split();
    let run = || -> Result<Summary> {
        let file = match &flags.config {
            Some(path) => ExperimentConfig::from_path(path)?,
            None => ExperimentConfig::default(),
        };
        let settings = Settings::resolve(experiment, &file.overlay(flags.as_config()))?;
        run_experiment(&settings, flags.jobs)
    };
    match run() {
        Ok(summary) => {
            eprintln!(
                "msl: {} finished in {:.1}s, summary in {}",
                summary.experiment.name(),
                summary.wall_time_s,
                summary.config.out_dir.join("summary.json").display()
            );
            0
        }
        Err(e) => {
            eprintln!("msl: error: {e}");
            exit_code(&e)
        }
    }
}

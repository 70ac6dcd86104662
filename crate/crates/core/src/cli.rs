//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::experiment::{self, ExperimentError, ExperimentSpec, SweepAxis};
use crate::mdp::{ActionSource, FixedDegree};
use crate::scenario::{Scenario, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(name = "ran-slicing", version, about = "Broadband / intermittent uplink slicing simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file (`section.key=value` lines). Defaults to the reference scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate p and compute the repetition policy.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a scenario under a policy file or a fixed degree.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "fixed_degree")]
        policy: Option<PathBuf>,
        /// Always send this many repetitions instead of following a policy.
        #[arg(long)]
        fixed_degree: Option<u32>,
        #[arg(long)]
        frames: Option<u64>,
    },
    /// Re-solve and simulate over a list of parameter values, writing CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// b1_fraction, distance or reward_spec.
        #[arg(long)]
        param: String,
        /// Comma-separated numbers, or `;`-separated `targets=rewards` items.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        frames: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Monte-Carlo estimates of the per-slot decoding probabilities.
    #[command(name = "estimate-p")]
    EstimateP {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
    },
}

fn load(common: &Common, frames: Option<u64>) -> Result<ScenarioConfig, ExperimentError> {
    let mut cfg = match &common.config {
        Some(path) => experiment::load_config(path)?,
        None => ScenarioConfig::reference(),
    };
    if let Some(seed) = common.seed {
        cfg.sim.seed = seed;
    }
    if let Some(frames) = frames {
        if frames == 0 {
            return Err(ExperimentError::InvalidSpec("--frames must be at least 1".into()));
        }
        cfg.sim.frames = frames;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), ExperimentError> {
    match out {
        Some(path) => experiment::write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn solve(common: &Common) -> Result<(), ExperimentError> {
    let cfg = load(common, None)?;
    let scenario = Scenario::resolve(&cfg)?;
    let (source, _, policy) = experiment::solve_policy(&scenario)?;
    eprintln!(
        "p={} iterations={} residual={:.3e}",
        source.probability(),
        policy.meta.iterations,
        policy.meta.residual
    );
    emit(common.out.as_deref(), &policy.to_text())
}

fn simulate(
    common: &Common,
    policy: Option<&Path>,
    fixed_degree: Option<u32>,
    frames: Option<u64>,
) -> Result<(), ExperimentError> {
    let cfg = load(common, frames)?;
    let scenario = Scenario::resolve(&cfg)?;
    let source: Box<dyn ActionSource> = match (policy, fixed_degree) {
        (_, Some(a)) => Box::new(FixedDegree(a)),
        (Some(path), None) => {
            let policy = experiment::load_policy(path)?;
            experiment::check_compatible(&policy, &cfg)?;
            Box::new(policy)
        }
        (None, None) => {
            info!("no policy given, solving");
            Box::new(experiment::solve_policy(&scenario)?.2)
        }
    };
    let report = experiment::simulate(&scenario, source.as_ref())?;
    eprintln!("{}", report.summary());
    emit(common.out.as_deref(), &report.to_text())
}

fn sweep(
    common: &Common,
    param: &str,
    values: &str,
    frames: Option<u64>,
    jobs: usize,
) -> Result<(), ExperimentError> {
    let axis: SweepAxis = param.parse()?;
    let cfg = load(common, frames)?;
    let mut spec = ExperimentSpec::new(cfg, axis, values, jobs)?;
    spec.out = common.out.clone();
    let rows = experiment::sweep(&spec)?;
    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    if failed > 0 {
        eprintln!("{failed} of {} sweep points failed", rows.len());
    }
    emit(spec.out.as_deref(), &experiment::csv_string(&rows)?)
}

fn estimate_p(common: &Common, samples: u64) -> Result<(), ExperimentError> {
    let cfg = load(common, None)?;
    if samples < 100_000 {
        return Err(ExperimentError::InvalidSpec(format!("--samples {samples} below 100000")));
    }
    let scenario = Scenario::resolve(&cfg)?;
    let rows = experiment::estimate_probabilities(&scenario, samples, cfg.sim.seed);
    emit(common.out.as_deref(), &experiment::format_probability_report(&rows))
}

pub fn execute(cli: &Cli) -> Result<(), ExperimentError> {
    match &cli.command {
        Command::Solve { common } => solve(common),
        Command::Simulate {
            common,
            policy,
            fixed_degree,
            frames,
        } => simulate(common, policy.as_deref(), *fixed_degree, *frames),
        Command::Sweep {
            common,
            param,
            values,
            frames,
            jobs,
        } => sweep(common, param, values, *frames, *jobs),
        Command::EstimateP { common, samples } => estimate_p(common, *samples),
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! Command-line orchestration: run configuration, subcommands, manifests and
//! the oracle suite behind `oracle-check`.
//!
//! Exit codes: 0 on success, 1 on a failed check or runtime error, 2 when a
//! config file or checkpoint is missing.

mod commands;
mod config;
mod manifest;
mod suite;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{
    cmd_evaluate, cmd_landscape, cmd_oracle_check, cmd_probe, cmd_smoothness, cmd_train, evaluation, goal_seeking_baseline,
    probe_rows, Evaluation, ProbeRow,
};
pub use config::{apply_override, AnalysisConfig, EnvConfig, OracleConfig, RunConfig, LOG_ENV, OUTPUT_DIR_ENV};
pub use manifest::{unix_now, write_atomic, RunManifest, CODE_VERSION};
pub use suite::{
    closed_form_check, grid_ordering_check, ordering_row, random_cost_trajectories, render_table, run_oracle_suite, smoothness_row,
    survival_bound_check, two_hot_check, CheckRow,
};

use crate::error::Result;
use crate::oracle::Convention;
use crate::repr::HeadVariant;

#[derive(Debug, Parser)]
#[command(name = "fcsrl", version, about = "Feasibility-consistent safe RL at desk scale")]
pub struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted-path override, e.g. `train.steps=0` or `steps=0`. Repeatable.
    #[arg(long = "override", short = 'o', global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory; takes precedence over the config and the environment.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Relative,
    Absolute,
    Appendix,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Relative => Convention::Relative,
            ConventionArg::Absolute => Convention::Absolute,
            ConventionArg::Appendix => Convention::Appendix,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Feasibility,
    CostValue,
}

impl From<TargetArg> for HeadVariant {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Feasibility => HeadVariant::Feasibility,
            TargetArg::CostValue => HeadVariant::CostValue,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent per configured seed.
    Train,
    /// Deterministic evaluation with normalised reward and cost.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reward of the low reference policy (default: uniform random).
        #[arg(long)]
        r_low: Option<f64>,
        /// Reward of the high reference policy (default: hazard-blind goal seeking).
        #[arg(long)]
        r_high: Option<f64>,
    },
    /// Exact-oracle and invariant checks; exit 1 if any fails.
    OracleCheck {
        /// Discount used inside the feasibility operator of the contraction check.
        #[arg(long, hide = true)]
        op_gamma: Option<f64>,
    },
    /// Export position landscapes of a checkpoint as `x,y,value` CSV.
    Landscape {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Temporal smoothness of both estimators.
    Smoothness {
        /// Audit rollouts of this checkpoint instead of random cost sequences.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        convention: Option<ConventionArg>,
    },
    /// Linear probe MSE of checkpoint encoders.
    Probe {
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = TargetArg::Feasibility)]
        target: TargetArg,
    },
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    match &cli.command {
        Command::Train => cmd_train(&cfg),
        Command::Evaluate {
            checkpoint,
            episodes,
            seed,
            r_low,
            r_high,
        } => cmd_evaluate(&cfg, checkpoint, *episodes, *seed, *r_low, *r_high),
        Command::OracleCheck { op_gamma } => {
            if op_gamma.is_some() {
                cfg.oracle.op_gamma = *op_gamma;
            }
            cmd_oracle_check(&cfg)
        }
        Command::Landscape { checkpoint, resolution } => cmd_landscape(&cfg, checkpoint, *resolution),
        Command::Smoothness { checkpoint, convention } => {
            cmd_smoothness(&cfg, checkpoint.as_deref(), convention.map(Convention::from))
        }
        Command::Probe { checkpoint, target } => cmd_probe(&cfg, checkpoint, (*target).into()),
    }
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Logger driven by the log-verbosity variable (default `warn`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

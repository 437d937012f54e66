use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tendonsim_estimators::Arch;

#[derive(Debug, Parser)]
#[command(name = "tendonsim", version, about = "Tendon force estimation, force-driven simulation, and policy training")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Master seed for every stochastic step.
    #[arg(long, global = true, env = "TENDONSIM_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Single-threaded execution.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Mlp,
    Rnn,
    Transformer,
}

impl From<ArchArg> for Arch {
    fn from(a: ArchArg) -> Arch {
        match a {
            ArchArg::Mlp => Arch::Mlp,
            ArchArg::Rnn => Arch::Rnn,
            ArchArg::Transformer => Arch::Transformer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RolloutSource {
    Ideal,
    Learned,
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicySourceArg {
    Learned,
    Ideal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Schedule {
    Stairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Generalization,
    Contact,
    Sine,
    Gap,
    Policy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConfigKind {
    Datagen,
    Train,
    Policy,
    Eval,
}

/// Where the ideal-source gain comes from.
#[derive(Debug, Args)]
pub struct GainArgs {
    /// Ideal-source gain, N/rad.
    #[arg(long)]
    pub gain: Option<f64>,
    /// Dataset to re-fit the ideal gain on when --gain is absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Collect a surrogate dataset.
    Datagen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the corpus length.
        #[arg(long)]
        minutes: Option<f64>,
    },
    /// Train a force estimator on a dataset.
    TrainEstimator {
        #[arg(long, value_enum)]
        arch: ArchArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        windows_per_epoch: Option<usize>,
    },
    /// Per-episode force RMSE on the validation split.
    EvalEstimator {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Drive a plant with a command trajectory (CSV column `theta_d`, control rate).
    Rollout {
        #[arg(long, value_enum)]
        source: RolloutSource,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        gain: Option<f64>,
        #[arg(long, default_value = "finger")]
        system: String,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a fingertip-tracking policy in force-driven simulation.
    TrainPolicy {
        #[arg(long, value_enum)]
        source: PolicySourceArg,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        gain: GainArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        updates: Option<usize>,
    },
    /// Deploy a policy snapshot on the surrogate finger.
    EvalPolicy {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, value_enum, default_value = "stairs")]
        schedule: Schedule,
        /// Seconds per schedule level.
        #[arg(long, default_value_t = 3.0)]
        dwell: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment and write its traces and summary.
    Eval {
        #[arg(long, value_enum)]
        experiment: Experiment,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        gain: GainArgs,
        /// Estimator for contact, sine, and gap.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        mlp: Option<PathBuf>,
        #[arg(long)]
        rnn: Option<PathBuf>,
        #[arg(long)]
        transformer: Option<PathBuf>,
        #[arg(long)]
        learned_policy: Option<PathBuf>,
        #[arg(long)]
        ideal_policy: Option<PathBuf>,
    },
    /// Parse and validate a config file.
    ValidateConfig {
        #[arg(long, value_enum)]
        kind: ConfigKind,
        file: PathBuf,
    },
    /// Small end-to-end pipeline run.
    Smoke {
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Datagen { .. } => "datagen",
            Command::TrainEstimator { .. } => "train-estimator",
            Command::EvalEstimator { .. } => "eval-estimator",
            Command::Rollout { .. } => "rollout",
            Command::TrainPolicy { .. } => "train-policy",
            Command::EvalPolicy { .. } => "eval-policy",
            Command::Eval { .. } => "eval",
            Command::ValidateConfig { .. } => "validate-config",
            Command::Smoke { .. } => "smoke",
        }
    }
}

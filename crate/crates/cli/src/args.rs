use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cwan::model::{LgNorm, Weighting};
use cwan::training::TrainConfig;

#[derive(Debug, Parser)]
#[command(name = "cwan", version, about = "Conditional weighting adversarial network experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic heterogeneous domains.
    Synth(SynthArgs),
    /// Train on domain files.
    Train(TrainArgs),
    /// Run a seeded experiment.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Clone, Args)]
pub struct SynthFlags {
    /// Comma-separated source dims or `lo:hi:step` ranges, plus `target=N`.
    /// Without `target=`, the last entry is the target.
    #[arg(long, default_value = "100:1000:100,target=2000")]
    pub dims: String,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Samples per class in every source.
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 10)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub spread: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Target samples beyond the labeled ones.
    #[arg(long, default_value_t = 500)]
    pub unlabeled: usize,
    /// Skip per-domain standardization.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub synth: SynthFlags,
    /// Generates the target with this many labeled samples per class on top
    /// of `--unlabeled`.
    #[arg(long, default_value_t = 3)]
    pub labeled_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LgArg {
    L1,
    L2,
    Off,
    Tied,
}

impl From<LgArg> for LgNorm {
    fn from(v: LgArg) -> Self {
        match v {
            LgArg::L1 => LgNorm::L1,
            LgArg::L2 => LgNorm::L2,
            LgArg::Off => LgNorm::Off,
            LgArg::Tied => LgNorm::Tied,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Conditional,
    Ones,
}

impl From<WeightingArg> for Weighting {
    fn from(v: WeightingArg) -> Self {
        match v {
            WeightingArg::Conditional => Weighting::Conditional,
            WeightingArg::Ones => Weighting::Ones,
        }
    }
}

/// Hyperparameters shared by `train` and `experiment`.
#[derive(Debug, Clone, Args)]
pub struct ModelFlags {
    #[arg(long, default_value_t = 0.03)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.004)]
    pub tau: f64,
    #[arg(long, default_value_t = 256)]
    pub dc: usize,
    #[arg(long, default_value_t = 256)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.004)]
    pub lr_fg: f64,
    #[arg(long, default_value_t = 0.001)]
    pub lr_d: f64,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, value_enum, default_value_t = LgArg::L1)]
    pub lg: LgArg,
    #[arg(long, value_enum, default_value_t = WeightingArg::Conditional)]
    pub weighting: WeightingArg,
    #[arg(long, default_value_t = 0.01)]
    pub leaky_slope: f64,
    /// Labeled target samples drawn per class.
    #[arg(long, default_value_t = 3)]
    pub labeled_per_class: usize,
}

impl ModelFlags {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            beta: self.beta,
            tau: self.tau,
            d_c: self.dc,
            hidden: self.hidden,
            lr_fg: self.lr_fg,
            lr_d: self.lr_d,
            iterations: self.iters,
            seed,
            lg_norm: self.lg.into(),
            weighting: self.weighting.into(),
            leaky_slope: self.leaky_slope,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Source domain file; repeat once per source.
    #[arg(long = "source", required = true)]
    pub sources: Vec<PathBuf>,
    /// Fully labeled target domain file; split into labeled and unlabeled
    /// parts with `--seed`.
    #[arg(long)]
    pub target: PathBuf,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standardize every domain with its own statistics before training.
    #[arg(long)]
    pub standardize: bool,
    /// Also write every sample's embedding to this file.
    #[arg(long)]
    pub export_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentFlags {
    /// Seed list: `a..b` (inclusive) or comma-separated values.
    #[arg(long, default_value = "0..9")]
    pub seeds: String,
    /// Parallel workers.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub synth: SynthFlags,
    /// Seed of the synthetic domains; per-run seeds vary the target split,
    /// the noise source and the initialization.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Informative synthetic sources used by `ablate` and `noise`.
    #[arg(long, default_value_t = 2)]
    pub sources: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// Compare objective variants on the same seeds.
    Ablate {
        #[command(flatten)]
        common: ExperimentFlags,
        /// Comma-separated variant names.
        #[arg(long, default_value = "full,no_lg,lg_tied,lg_l2,ones_weight,no_lg_and_ones")]
        variants: String,
        /// Append a pure-noise source of this dimension.
        #[arg(long)]
        noise_dim: Option<usize>,
    },
    /// Append a pure-noise source and report every source's final weight.
    Noise {
        #[command(flatten)]
        common: ExperimentFlags,
        #[arg(long, default_value_t = 500)]
        noise_dim: usize,
    },
    /// Vary the number of synthetic sources.
    Sweep {
        #[command(flatten)]
        common: ExperimentFlags,
        #[arg(long, default_value = "0,2,4,6,8,10")]
        ns: String,
    },
}

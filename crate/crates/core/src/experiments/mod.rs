//! Seeded experiment drivers: baselines, ablations, noise detection and the
//! source-count sweep, aggregated into mean ± standard error.

mod embeddings;
mod report;


pub use embeddings::{export_embeddings, load_embeddings, EmbeddingRole, EmbeddingRow};
pub use report::{write_aggregate_csv, write_noise_csv, write_per_seed_csv};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::{
    generate_noise_domain, generate_synthetic_domains, split_target, DomainData, MultiSourceTask,
    SynthSpec,
};
use crate::error::{Error, Result};
use crate::model::{LgNorm, Weighting};
use crate::training::{
    evaluate_accuracy, train, train_supervised, IterationRecord, SupervisedScope, TrainConfig,
    TrainTrace,
};

/// Builds the task for one seed.
pub type TaskFn<'a> = dyn Fn(u64) -> Result<MultiSourceTask> + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationVariant {
    Full,
    NoLg,
    LgTied,
    LgL2,
    OnesWeight,
    NoLgAndOnes,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 6] = [
        AblationVariant::Full,
        AblationVariant::NoLg,
        AblationVariant::LgTied,
        AblationVariant::LgL2,
        AblationVariant::OnesWeight,
        AblationVariant::NoLgAndOnes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoLg => "no_lg",
            AblationVariant::LgTied => "lg_tied",
            AblationVariant::LgL2 => "lg_l2",
            AblationVariant::OnesWeight => "ones_weight",
            AblationVariant::NoLgAndOnes => "no_lg_and_ones",
        }
    }

    /// `base` with this variant's override applied.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            AblationVariant::Full => {}
            AblationVariant::NoLg => cfg.lg_norm = LgNorm::Off,
            AblationVariant::LgTied => cfg.lg_norm = LgNorm::Tied,
            AblationVariant::LgL2 => cfg.lg_norm = LgNorm::L2,
            AblationVariant::OnesWeight => cfg.weighting = Weighting::Ones,
            AblationVariant::NoLgAndOnes => {
                cfg.lg_norm = LgNorm::Off;
                cfg.weighting = Weighting::Ones;
            }
        }
        cfg
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = AblationVariant::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!(
                    "unknown variant `{s}` (expected one of {})",
                    known.join(", ")
                ))
            })
    }
}

/// Seeds and execution settings shared by every driver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub seeds: Vec<u64>,
    /// Worker threads; 1 runs seeds in order on the calling thread.
    pub jobs: usize,
    /// Keep per-iteration records in the summaries.
    pub keep_traces: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seeds: (0..10).collect(),
            jobs: 1,
            keep_traces: false,
        }
    }
}

/// Outcome of one (experiment, variant) pair over all seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub experiment: String,
    pub variant: String,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
    /// Final-iteration source weights per seed.
    pub final_weights: Vec<Vec<f64>>,
    /// Final-iteration divergences per seed.
    pub final_deltas: Vec<Vec<f64>>,
    /// Per-seed records, when requested.
    pub traces: Option<Vec<Vec<IterationRecord>>>,
}

/// Mean and standard error (`n − 1` sample deviation over `√n`); the error of
/// a single value is 0.
pub fn mean_stderr(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Validation("no values to aggregate".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

struct SeedResult {
    accuracy: f64,
    records: Vec<IterationRecord>,
}

fn run_seeds<F>(experiment: &str, variant: &str, opts: &RunOptions, run: F) -> Result<RunSummary>
where
    F: Fn(u64) -> Result<SeedResult> + Sync,
{
    if opts.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let results: Vec<SeedResult> = if opts.jobs <= 1 {
        opts.seeds.iter().map(|&s| run(s)).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", opts.jobs)))?;
        pool.install(|| opts.seeds.par_iter().map(|&s| run(s)).collect::<Result<_>>())?
    };
    let accuracies: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let (mean, stderr) = mean_stderr(&accuracies)?;
    let last = |f: fn(&IterationRecord) -> &Vec<f64>| {
        results
            .iter()
            .map(|r| r.records.last().map(f).cloned().unwrap_or_default())
            .collect()
    };
    Ok(RunSummary {
        experiment: experiment.into(),
        variant: variant.into(),
        seeds: opts.seeds.clone(),
        accuracies,
        mean,
        stderr,
        final_weights: last(|r| &r.weights),
        final_deltas: last(|r| &r.deltas),
        traces: opts
            .keep_traces
            .then(|| results.into_iter().map(|r| r.records).collect()),
    })
}

fn finish(trace: TrainTrace, task: &MultiSourceTask, config: &TrainConfig) -> Result<SeedResult> {
    Ok(SeedResult {
        accuracy: evaluate_accuracy(&trace.final_params, task.target_unlabeled(), config.leaky_slope)?,
        records: trace.records,
    })
}

fn seeded(config: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..config.clone()
    }
}

/// Target-only supervised baseline.
pub fn run_baseline_nnt(
    experiment: &str,
    tasks: &TaskFn<'_>,
    config: &TrainConfig,
    opts: &RunOptions,
) -> Result<RunSummary> {
    run_seeds(experiment, "nnt", opts, |seed| {
        let task = tasks(seed)?;
        let cfg = seeded(config, seed);
        finish(train_supervised(&task, &cfg, SupervisedScope::TargetOnly)?, &task, &cfg)
    })
}

/// Supervised baseline over every labeled sample, sources included.
pub fn run_baseline_nnst(
    experiment: &str,
    tasks: &TaskFn<'_>,
    config: &TrainConfig,
    opts: &RunOptions,
) -> Result<RunSummary> {
    run_seeds(experiment, "nnst", opts, |seed| {
        let task = tasks(seed)?;
        let cfg = seeded(config, seed);
        finish(train_supervised(&task, &cfg, SupervisedScope::AllLabeled)?, &task, &cfg)
    })
}

/// Full CWAN training under one variant.
pub fn run_cwan(
    experiment: &str,
    variant: AblationVariant,
    tasks: &TaskFn<'_>,
    config: &TrainConfig,
    opts: &RunOptions,
) -> Result<RunSummary> {
    let base = variant.apply(config);
    run_seeds(experiment, variant.name(), opts, |seed| {
        let task = tasks(seed)?;
        let cfg = seeded(&base, seed);
        finish(train(&task, &cfg)?, &task, &cfg)
    })
}

pub fn run_ablation(
    tasks: &TaskFn<'_>,
    variants: &[AblationVariant],
    config: &TrainConfig,
    opts: &RunOptions,
) -> Result<Vec<RunSummary>> {
    if variants.is_empty() {
        return Err(Error::Config("no ablation variants given".into()));
    }
    variants
        .iter()
        .map(|&v| run_cwan("ablation", v, tasks, config, opts))
        .collect()
}

/// `base` with a pure-noise source appended. The noise domain has as many
/// samples as the first source and is drawn from `seed`.
pub fn with_noise_source(base: &MultiSourceTask, noise_dim: usize, seed: u64) -> Result<MultiSourceTask> {
    let n = base.sources().first().map_or(0, |s| s.len());
    let mut sources = base.sources().to_vec();
    sources.push(generate_noise_domain(noise_dim, n, base.classes(), seed)?);
    base.with_sources(sources)
}

/// Trains with an injected noise source; the noise source is the last one in
/// every reported weight and divergence vector.
pub fn run_noise_detection(
    base: &TaskFn<'_>,
    noise_dim: usize,
    config: &TrainConfig,
    opts: &RunOptions,
) -> Result<RunSummary> {
    let tasks = |seed| {
        let task = base(seed)?;
        if task.num_sources() < 2 {
            return Err(Error::Config(
                "noise detection needs at least 2 informative sources".into(),
            ));
        }
        with_noise_source(&task, noise_dim, seed)
    };
    run_cwan("noise", AblationVariant::Full, &tasks, config, opts).map(|mut s| {
        s.variant = match config.weighting {
            Weighting::Conditional => "full".into(),
            Weighting::Ones => "ones_weight".into(),
        };
        s
    })
}

/// Default source-count grid.
pub const SWEEP_GRID: [usize; 6] = [0, 2, 4, 6, 8, 10];

/// One summary per entry of `counts`, each training on the first `n` sources
/// of `spec`. `n = 0` runs the target-only baseline.
pub fn run_source_sweep(
    spec: &SynthSpec,
    counts: &[usize],
    config: &TrainConfig,
    opts: &RunOptions,
) -> Result<Vec<RunSummary>> {
    if let Some(&n) = counts.iter().find(|&&n| n > spec.source_dims.len()) {
        return Err(Error::Config(format!(
            "N_S = {n} exceeds the {} generated sources",
            spec.source_dims.len()
        )));
    }
    let domains = generate_synthetic_domains(spec)?;
    counts
        .iter()
        .map(|&n| {
            let tasks = |seed| synthetic_task_from(spec, &domains, n, seed);
            let mut s = if n == 0 {
                run_baseline_nnt("sweep", &tasks, config, opts)?
            } else {
                run_cwan("sweep", AblationVariant::Full, &tasks, config, opts)?
            };
            s.variant = format!("ns={n}");
            Ok(s)
        })
        .collect()
}

/// The first `num_sources` of pre-generated domains with a fresh target split.
fn synthetic_task_from(
    spec: &SynthSpec,
    domains: &[DomainData],
    num_sources: usize,
    split_seed: u64,
) -> Result<MultiSourceTask> {
    let (target, sources) = domains.split_last().expect("target is always generated");
    let (labeled, unlabeled) = split_target(target, spec.labeled_per_class, split_seed)?;
    MultiSourceTask::new(sources[..num_sources].to_vec(), labeled, unlabeled)
}

/// Task builder over fixed synthetic domains: the first `num_sources`
/// sources, target split drawn from the per-run seed.
pub fn synthetic_tasks(
    spec: &SynthSpec,
    num_sources: usize,
) -> Result<impl Fn(u64) -> Result<MultiSourceTask> + Sync> {
    if num_sources > spec.source_dims.len() {
        return Err(Error::Config(format!(
            "asked for {num_sources} sources, spec generates {}",
            spec.source_dims.len()
        )));
    }
    let spec = spec.clone();
    let domains = generate_synthetic_domains(&spec)?;
    Ok(move |seed| synthetic_task_from(&spec, &domains, num_sources, seed))
}

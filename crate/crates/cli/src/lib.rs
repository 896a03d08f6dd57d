//! Command implementations behind the `cwan` binary.

pub mod args;
pub mod manifest;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use cwan::data::{
    generate_synthetic_domains, load_domain_file, save_domain_file, split_target, standardize,
    DomainData, MultiSourceTask, SynthSpec,
};
use cwan::experiments::{
    export_embeddings, run_ablation, run_noise_detection, run_source_sweep, synthetic_tasks,
    with_noise_source, write_aggregate_csv, write_noise_csv, write_per_seed_csv, AblationVariant,
    RunOptions, RunSummary,
};
use cwan::training::{evaluate_accuracy, train, IterationRecord};

use args::{Cli, Command, ExperimentCommand, ExperimentFlags, SynthArgs, SynthFlags, TrainArgs};
use manifest::RunManifest;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a).map(|acc| println!("final_accuracy {acc}")),
        Command::Experiment(e) => cmd_experiment(&e),
    }
}

/// Parses `100:1000:100,target=2000` into source dims and a target dim.
pub fn parse_dims(spec: &str) -> Result<(Vec<usize>, usize)> {
    let num = |s: &str| -> Result<usize> {
        s.trim()
            .parse()
            .map_err(|_| anyhow!("invalid dimension `{s}` in --dims"))
    };
    let mut dims = Vec::new();
    let mut target = None;
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some(t) = item.strip_prefix("target=") {
            target = Some(num(t)?);
        } else if item.contains(':') {
            let parts: Vec<&str> = item.split(':').collect();
            let [lo, hi, step] = parts[..] else {
                bail!("range `{item}` in --dims must be lo:hi:step");
            };
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if step == 0 || lo > hi {
                bail!("range `{item}` in --dims is empty");
            }
            dims.extend((lo..=hi).step_by(step));
        } else {
            dims.push(num(item)?);
        }
    }
    let target = match target {
        Some(t) => t,
        None => dims.pop().ok_or_else(|| anyhow!("--dims lists no domains"))?,
    };
    Ok((dims, target))
}

/// Parses `a..b` (inclusive) or `a,b,c`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| anyhow!("invalid seed range `{spec}`"))?;
        let b: u64 = b.trim().parse().map_err(|_| anyhow!("invalid seed range `{spec}`"))?;
        (a..=b).collect()
    } else {
        parse_list(spec, "seed")?
    };
    if seeds.is_empty() {
        bail!("seed list `{spec}` is empty");
    }
    Ok(seeds)
}

fn parse_list<T: std::str::FromStr>(spec: &str, what: &str) -> Result<Vec<T>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| anyhow!("invalid {what} `{s}`")))
        .collect()
}

fn synth_spec(flags: &SynthFlags, labeled_per_class: usize, seed: u64) -> Result<SynthSpec> {
    let (source_dims, target_dim) = parse_dims(&flags.dims)?;
    let spec = SynthSpec {
        latent_dim: flags.latent_dim,
        classes: flags.classes,
        source_dims,
        target_dim,
        per_class: flags.per_class,
        labeled_per_class,
        unlabeled: flags.unlabeled,
        spread: flags.spread,
        noise: flags.noise,
        seed,
        standardize: !flags.raw,
    };
    spec.validate()?;
    Ok(spec)
}

fn record_spec(m: &mut RunManifest, spec: &SynthSpec) {
    m.set("synth_latent_dim", spec.latent_dim);
    m.set("synth_classes", spec.classes);
    let dims: Vec<String> = spec.source_dims.iter().map(ToString::to_string).collect();
    m.set("synth_source_dims", dims.join(","));
    m.set("synth_target_dim", spec.target_dim);
    m.set("synth_per_class", spec.per_class);
    m.set("synth_labeled_per_class", spec.labeled_per_class);
    m.set("synth_unlabeled", spec.unlabeled);
    m.set("synth_spread", spec.spread);
    m.set("synth_noise", spec.noise);
    m.set("synth_seed", spec.seed);
    m.set("synth_standardize", spec.standardize);
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let start = Instant::now();
    let spec = synth_spec(&a.synth, a.labeled_per_class, a.seed)?;
    let domains = generate_synthetic_domains(&spec)?;
    create_dir(&a.out)?;
    let mut m = RunManifest::new("synth");
    record_spec(&mut m, &spec);
    for d in &domains {
        let path = a.out.join(format!("{}.txt", d.name));
        save_domain_file(&path, d)?;
        m.input(&format!("output_{}", d.name), &path)?;
    }
    m.duration(start.elapsed());
    m.write(&a.out)
}

/// `iter,loss_fg,loss_lg,loss_dg_inv,loss_d,delta_1..K,w_1..K,acc_target`.
pub fn write_trace_csv(
    out: &mut impl Write,
    records: &[IterationRecord],
    sources: usize,
) -> std::io::Result<()> {
    let mut header = vec!["iter", "loss_fg", "loss_lg", "loss_dg_inv", "loss_d"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend((1..=sources).map(|k| format!("delta_{k}")));
    header.extend((1..=sources).map(|k| format!("w_{k}")));
    header.push("acc_target".into());
    writeln!(out, "{}", header.join(","))?;
    for r in records {
        let mut cells = vec![r.iteration.to_string()];
        cells.extend(
            [r.loss_fg, r.loss_lg, r.loss_dg_inverted, r.loss_d]
                .iter()
                .chain(&r.deltas)
                .chain(&r.weights)
                .chain([&r.target_accuracy])
                .map(f64::to_string),
        );
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

fn load(path: &Path, standardized: bool) -> Result<DomainData> {
    let d = load_domain_file(path)?;
    Ok(if standardized { standardize(&d)? } else { d })
}

fn load_task(a: &TrainArgs) -> Result<MultiSourceTask> {
    let target = load(&a.target, a.standardize)?;
    let sources = a
        .sources
        .iter()
        .map(|p| load(p, a.standardize))
        .collect::<Result<Vec<_>>>()?;
    for (p, s) in a.sources.iter().zip(&sources) {
        if s.classes() != target.classes() {
            bail!(
                "class-count mismatch: {} has {} classes, target {} has {}",
                p.display(),
                s.classes(),
                a.target.display(),
                target.classes()
            );
        }
        if s.labels().is_none() {
            bail!("source {} is unlabeled", p.display());
        }
    }
    if target.labels().is_none() {
        bail!(
            "target {} needs labels for the labeled split and for evaluation",
            a.target.display()
        );
    }
    let (labeled, unlabeled) = split_target(&target, a.model.labeled_per_class, a.seed)?;
    Ok(MultiSourceTask::new(sources, labeled, unlabeled)?)
}

/// Trains and writes the trace; returns the final target accuracy.
pub fn cmd_train(a: &TrainArgs) -> Result<f64> {
    let start = Instant::now();
    let task = load_task(a)?;
    let cfg = a.model.config(a.seed);
    cfg.validate()?;
    let mut m = RunManifest::new("train");
    m.config(&cfg);
    m.set("labeled_per_class", a.model.labeled_per_class);
    m.set("standardize", a.standardize);
    for (k, p) in a.sources.iter().enumerate() {
        m.input(&format!("source_{}", k + 1), p)?;
    }
    m.input("target", &a.target)?;

    let trace = train(&task, &cfg)?;
    let acc = evaluate_accuracy(&trace.final_params, task.target_unlabeled(), cfg.leaky_slope)?;
    create_dir(&a.out)?;
    let path = a.out.join("trace.csv");
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("{}", path.display()))?);
    write_trace_csv(&mut w, &trace.records, task.num_sources())?;
    w.flush()?;
    if let Some(p) = &a.export_embeddings {
        export_embeddings(&trace.final_params, &task, cfg.leaky_slope, p)?;
        m.set("embeddings", p.display());
    }
    m.set("final_accuracy", acc);
    m.duration(start.elapsed());
    m.write(&a.out)?;
    Ok(acc)
}

fn write_csv(
    dir: &Path,
    name: &str,
    write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("{}", path.display()))?);
    write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_summaries(dir: &Path, summaries: &[RunSummary]) -> Result<()> {
    write_csv(dir, "per_seed.csv", |w| write_per_seed_csv(w, summaries))?;
    write_csv(dir, "aggregate.csv", |w| write_aggregate_csv(w, summaries))
}

struct Prepared {
    spec: SynthSpec,
    opts: RunOptions,
    manifest: RunManifest,
}

fn prepare(name: &str, c: &ExperimentFlags) -> Result<Prepared> {
    let spec = synth_spec(&c.synth, c.model.labeled_per_class, c.data_seed)?;
    let opts = RunOptions {
        seeds: parse_seeds(&c.seeds)?,
        jobs: c.jobs.max(1),
        keep_traces: false,
    };
    c.model.config(0).validate()?;
    let mut m = RunManifest::new(&format!("experiment {name}"));
    m.config(&c.model.config(0));
    m.set("seed", "per run");
    let seeds: Vec<String> = opts.seeds.iter().map(ToString::to_string).collect();
    m.set("seeds", seeds.join(","));
    m.set("jobs", opts.jobs);
    record_spec(&mut m, &spec);
    create_dir(&c.out)?;
    Ok(Prepared {
        spec,
        opts,
        manifest: m,
    })
}

pub fn cmd_experiment(e: &ExperimentCommand) -> Result<()> {
    let start = Instant::now();
    match e {
        ExperimentCommand::Ablate {
            common,
            variants,
            noise_dim,
        } => {
            let variants = variants
                .split(',')
                .map(|v| Ok(v.trim().parse::<AblationVariant>()?))
                .collect::<Result<Vec<_>>>()?;
            let mut p = prepare("ablate", common)?;
            let base = synthetic_tasks(&p.spec, common.sources)?;
            let summaries = match noise_dim {
                Some(dim) => {
                    p.manifest.set("noise_dim", dim);
                    let tasks = |seed| with_noise_source(&base(seed)?, *dim, seed);
                    run_ablation(&tasks, &variants, &common.model.config(0), &p.opts)?
                }
                None => run_ablation(&base, &variants, &common.model.config(0), &p.opts)?,
            };
            write_summaries(&common.out, &summaries)?;
            p.manifest.set("sources", common.sources);
            p.manifest.duration(start.elapsed());
            p.manifest.write(&common.out)
        }
        ExperimentCommand::Noise { common, noise_dim } => {
            let mut p = prepare("noise", common)?;
            let base = synthetic_tasks(&p.spec, common.sources)?;
            let s = run_noise_detection(&base, *noise_dim, &common.model.config(0), &p.opts)?;
            write_summaries(&common.out, std::slice::from_ref(&s))?;
            write_csv(&common.out, "noise_weights.csv", |w| write_noise_csv(w, &s))?;
            p.manifest.set("sources", common.sources);
            p.manifest.set("noise_dim", noise_dim);
            p.manifest.duration(start.elapsed());
            p.manifest.write(&common.out)
        }
        ExperimentCommand::Sweep { common, ns } => {
            let mut p = prepare("sweep", common)?;
            let counts = parse_list::<usize>(ns, "source count")?;
            let summaries = run_source_sweep(&p.spec, &counts, &common.model.config(0), &p.opts)?;
            write_summaries(&common.out, &summaries)?;
            p.manifest.set("ns", ns);
            p.manifest.duration(start.elapsed());
            p.manifest.write(&common.out)
        }
    }
}

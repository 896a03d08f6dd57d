//! Related-but-heterogeneous Gaussian domains.
//!
//! Every domain shares one set of latent class Gaussians. Domain `k` sees the
//! latent samples through its own random projection with orthonormal columns
//! into `d_k` dimensions, plus isotropic observation noise, so domains agree on
//! class structure while having different dimensions and coordinates.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{seeded_rng, split_target, standardize, DomainData, MultiSourceTask};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MEANS_STREAM: u64 = 1;

fn projection_stream(domain: usize) -> u64 {
    0x100 + 2 * domain as u64
}

fn sample_stream(domain: usize) -> u64 {
    0x101 + 2 * domain as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub latent_dim: usize,
    pub classes: usize,
    pub source_dims: Vec<usize>,
    pub target_dim: usize,
    pub per_class: usize,
    pub labeled_per_class: usize,
    pub unlabeled: usize,
    /// Standard deviation of latent samples around their class mean.
    pub spread: f64,
    /// Standard deviation of per-coordinate observation noise.
    pub noise: f64,
    pub seed: u64,
    pub standardize: bool,
}

impl Default for SynthSpec {
    /// Ten sources of 100..=1000 dimensions and a 2000-dimensional target,
    /// three classes.
    fn default() -> Self {
        SynthSpec {
            latent_dim: 10,
            classes: 3,
            source_dims: (1..=10).map(|i| 100 * i).collect(),
            target_dim: 2000,
            per_class: 100,
            labeled_per_class: 3,
            unlabeled: 500,
            spread: 0.5,
            noise: 0.1,
            seed: 0,
            standardize: true,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("latent-dim", self.latent_dim),
            ("classes", self.classes),
            ("per-class", self.per_class),
            ("labeled-per-class", self.labeled_per_class),
            ("unlabeled", self.unlabeled),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for &d in self.source_dims.iter().chain([&self.target_dim]) {
            if d < self.latent_dim {
                return Err(Error::Config(format!(
                    "domain dimension {d} is below the latent dimension {}",
                    self.latent_dim
                )));
            }
        }
        if !(self.spread >= 0.0 && self.noise >= 0.0)
            || !self.spread.is_finite()
            || !self.noise.is_finite()
        {
            return Err(Error::Config("spread and noise must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn dims(&self) -> Vec<usize> {
        let mut dims = self.source_dims.clone();
        dims.push(self.target_dim);
        dims
    }

    fn target_len(&self) -> usize {
        self.labeled_per_class * self.classes + self.unlabeled
    }
}

/// Sources in order, then the target as the last element.
pub fn generate_synthetic_domains(spec: &SynthSpec) -> Result<Vec<DomainData>> {
    spec.validate()?;
    let means = class_means(spec)?;
    let dims = spec.dims();
    let k_sources = spec.source_dims.len();
    dims.iter()
        .enumerate()
        .map(|(k, &dim)| {
            let is_target = k == k_sources;
            let n = if is_target {
                spec.target_len()
            } else {
                spec.per_class * spec.classes
            };
            let projection = projection(spec, k, dim);
            let mut rng = seeded_rng(spec.seed, sample_stream(k));
            let mut values = Vec::with_capacity(n * dim);
            let mut labels = Vec::with_capacity(n);
            let mut z = vec![0.0; spec.latent_dim];
            for i in 0..n {
                let c = i % spec.classes;
                for (l, zl) in z.iter_mut().enumerate() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *zl = means.get(c, l) + spec.spread * e;
                }
                for r in 0..dim {
                    let row = projection.row(r);
                    let signal: f64 = row.iter().zip(&z).map(|(p, zl)| p * zl).sum();
                    let e: f64 = StandardNormal.sample(&mut rng);
                    values.push(signal + spec.noise * e);
                }
                labels.push(c);
            }
            let name = if is_target {
                "target".to_string()
            } else {
                format!("source_{}", k + 1)
            };
            let domain =
                DomainData::new(name, Tensor::matrix(n, dim, values)?, Some(labels), spec.classes)?;
            if spec.standardize {
                standardize(&domain)
            } else {
                Ok(domain)
            }
        })
        .collect()
}

/// The `d_k × latent` orthonormal-column map used for domain `k` (sources
/// first, target last).
pub fn synthetic_projection(spec: &SynthSpec, domain: usize) -> Result<Tensor> {
    spec.validate()?;
    let dims = spec.dims();
    let dim = *dims.get(domain).ok_or_else(|| {
        Error::Config(format!("domain index {domain} out of range ({})", dims.len()))
    })?;
    Ok(projection(spec, domain, dim))
}

fn class_means(spec: &SynthSpec) -> Result<Tensor> {
    let mut rng = seeded_rng(spec.seed, MEANS_STREAM);
    let values = (0..spec.classes * spec.latent_dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Tensor::matrix(spec.classes, spec.latent_dim, values)
}

fn projection(spec: &SynthSpec, domain: usize, dim: usize) -> Tensor {
    let mut rng = seeded_rng(spec.seed, projection_stream(domain));
    let latent = spec.latent_dim;
    let mut cols: Vec<Vec<f64>> = (0..latent)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    // Modified Gram-Schmidt; Gaussian columns are independent almost surely.
    for j in 0..latent {
        let (done, rest) = cols.split_at_mut(j);
        let col = &mut rest[0];
        for q in done.iter() {
            let dot: f64 = q.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            col.iter_mut().zip(q).for_each(|(c, qv)| *c -= dot * qv);
        }
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        col.iter_mut().for_each(|c| *c /= norm);
    }
    let mut values = Vec::with_capacity(dim * latent);
    for r in 0..dim {
        values.extend(cols.iter().map(|c| c[r]));
    }
    Tensor::from_raw(vec![dim, latent], values)
}

/// Pure noise: standard normal features, labels uniform over `classes` and
/// independent of the features.
pub fn generate_noise_domain(dim: usize, n: usize, classes: usize, seed: u64) -> Result<DomainData> {
    if dim == 0 || n == 0 || classes == 0 {
        return Err(Error::Config(
            "noise domain needs positive dim, n and classes".into(),
        ));
    }
    let mut rng = seeded_rng(seed, 0xA015E);
    let values = (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    DomainData::new("noise", Tensor::matrix(n, dim, values)?, Some(labels), classes)
}

/// Generates the spec's domains, keeps the first `num_sources` sources and
/// splits the target with `split_seed`.
pub fn synthetic_task(spec: &SynthSpec, num_sources: usize, split_seed: u64) -> Result<MultiSourceTask> {
    if num_sources > spec.source_dims.len() {
        return Err(Error::Config(format!(
            "asked for {num_sources} sources, spec generates {}",
            spec.source_dims.len()
        )));
    }
    // Streams are keyed by domain index, so the kept sources and the target
    // do not depend on how many sources are dropped.
    let mut domains = generate_synthetic_domains(spec)?;
    let target = domains.pop().expect("target is always generated");
    domains.truncate(num_sources);
    let (labeled, unlabeled) = split_target(&target, spec.labeled_per_class, split_seed)?;
    MultiSourceTask::new(domains, labeled, unlabeled)
}

//! Domain containers, synthetic generators, domain-file IO and the
//! labeled/unlabeled target split.

mod io;
mod prep;
mod synth;

pub use io::{load_domain_file, parse_domain, save_domain_file, write_domain};
pub use prep::{split_target, standardize};
pub use synth::{
    generate_noise_domain, generate_synthetic_domains, synthetic_projection, synthetic_task,
    SynthSpec,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// One domain: an `n × d` feature matrix with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainData {
    pub name: String,
    features: Tensor,
    labels: Option<Vec<usize>>,
    classes: usize,
}

impl DomainData {
    pub fn new(
        name: impl Into<String>,
        features: Tensor,
        labels: Option<Vec<usize>>,
        classes: usize,
    ) -> Result<Self> {
        let name = name.into();
        if features.rank() != 2 {
            return Err(Error::Validation(format!(
                "domain `{name}`: features must be a matrix, got shape {:?}",
                features.shape()
            )));
        }
        if classes == 0 {
            return Err(Error::Validation(format!("domain `{name}`: zero classes")));
        }
        if let Some(labels) = &labels {
            if labels.len() != features.rows() {
                return Err(Error::Validation(format!(
                    "domain `{name}`: {} labels for {} samples",
                    labels.len(),
                    features.rows()
                )));
            }
            if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
                return Err(Error::Validation(format!(
                    "domain `{name}`: label {bad} out of range for {classes} classes"
                )));
            }
        }
        Ok(DomainData {
            name,
            features,
            labels,
            classes,
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Samples per class; all zeros when unlabeled.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in self.labels.iter().flatten() {
            counts[l] += 1;
        }
        counts
    }

    pub(crate) fn with_features(&self, features: Tensor) -> Result<Self> {
        DomainData::new(self.name.clone(), features, self.labels.clone(), self.classes)
    }
}

/// Ground-truth labels of the unlabeled target samples. Training code never
/// sees these; only accuracy evaluation and embedding export read them.
#[derive(Clone, PartialEq)]
pub struct HeldOutLabels(Vec<usize>);

impl HeldOutLabels {
    pub(crate) fn new(labels: Vec<usize>) -> Self {
        HeldOutLabels(labels)
    }

    pub(crate) fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::fmt::Debug for HeldOutLabels {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "HeldOutLabels({} sealed)", self.0.len())
    }
}

/// Unlabeled target samples plus their sealed evaluation labels.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledTarget {
    data: DomainData,
    held_out: HeldOutLabels,
}

impl UnlabeledTarget {
    /// `data` must carry the ground truth; it is moved into the sealed field.
    pub fn seal(data: DomainData) -> Result<Self> {
        let DomainData {
            name,
            features,
            labels,
            classes,
        } = data;
        let labels = labels.ok_or_else(|| {
            Error::Validation(format!(
                "domain `{name}`: unlabeled target needs held-out labels for evaluation"
            ))
        })?;
        Ok(UnlabeledTarget {
            data: DomainData::new(name, features, None, classes)?,
            held_out: HeldOutLabels::new(labels),
        })
    }

    /// The features with labels stripped.
    pub fn data(&self) -> &DomainData {
        &self.data
    }

    pub fn features(&self) -> &Tensor {
        self.data.features()
    }

    pub fn held_out(&self) -> &HeldOutLabels {
        &self.held_out
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// K labeled, mutually heterogeneous source domains plus a target split into
/// a few labeled samples and an unlabeled remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSourceTask {
    sources: Vec<DomainData>,
    target_labeled: DomainData,
    target_unlabeled: UnlabeledTarget,
    classes: usize,
}

impl MultiSourceTask {
    /// Zero sources is accepted so target-only baselines can share the type;
    /// adversarial training itself rejects it.
    pub fn new(
        sources: Vec<DomainData>,
        target_labeled: DomainData,
        target_unlabeled: UnlabeledTarget,
    ) -> Result<Self> {
        let classes = target_labeled.classes();
        let check_classes = |d: &DomainData| {
            if d.classes() != classes {
                Err(Error::Config(format!(
                    "domain `{}` has {} classes, target has {classes}",
                    d.name,
                    d.classes()
                )))
            } else {
                Ok(())
            }
        };
        for (k, s) in sources.iter().enumerate() {
            check_classes(s)?;
            if s.labels().is_none() {
                return Err(Error::Config(format!(
                    "source {} (`{}`) has no labels",
                    k + 1,
                    s.name
                )));
            }
            if let Some(c) = s.class_counts().iter().position(|&n| n == 0) {
                return Err(Error::Config(format!(
                    "source {} (`{}`) has no samples of class {c}",
                    k + 1,
                    s.name
                )));
            }
        }
        check_classes(target_unlabeled.data())?;
        if target_labeled.labels().is_none() {
            return Err(Error::Config("labeled target split has no labels".into()));
        }
        if let Some(c) = target_labeled.class_counts().iter().position(|&n| n == 0) {
            return Err(Error::Config(format!(
                "labeled target split has no samples of class {c}"
            )));
        }
        if target_unlabeled.is_empty() {
            return Err(Error::Config("unlabeled target split is empty".into()));
        }
        if target_labeled.dim() != target_unlabeled.data().dim() {
            return Err(Error::Config(format!(
                "target splits disagree on dimension: {} vs {}",
                target_labeled.dim(),
                target_unlabeled.data().dim()
            )));
        }
        Ok(MultiSourceTask {
            sources,
            target_labeled,
            target_unlabeled,
            classes,
        })
    }

    pub fn sources(&self) -> &[DomainData] {
        &self.sources
    }

    pub fn target_labeled(&self) -> &DomainData {
        &self.target_labeled
    }

    pub fn target_unlabeled(&self) -> &UnlabeledTarget {
        &self.target_unlabeled
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn source_dims(&self) -> Vec<usize> {
        self.sources.iter().map(DomainData::dim).collect()
    }

    pub fn target_dim(&self) -> usize {
        self.target_labeled.dim()
    }

    /// Same target, different source list.
    pub fn with_sources(&self, sources: Vec<DomainData>) -> Result<Self> {
        MultiSourceTask::new(
            sources,
            self.target_labeled.clone(),
            self.target_unlabeled.clone(),
        )
    }
}

/// Deterministic generator for one named random stream under a seed.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

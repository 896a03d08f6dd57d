use crate::data::MultiSourceTask;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Labeled samples with their one-hot targets precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub onehot: Tensor,
}

impl LabeledSet {
    pub fn new(features: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rank() != 2 || features.rows() != labels.len() {
            return Err(Error::shape("labeled set", features.shape(), &[labels.len()]));
        }
        let onehot = onehot(&labels, classes)?;
        Ok(LabeledSet {
            features,
            labels,
            onehot,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn onehot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut v = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Validation(format!(
                "label {l} out of range for {classes} classes"
            )));
        }
        v[i * classes + l] = 1.0;
    }
    Tensor::matrix(labels.len(), classes, v)
}

/// Everything one full-batch objective evaluation reads: labeled sources, the
/// labeled target samples, and the unlabeled target features (no labels).
///
/// Target features are stacked labeled-first so one transformer pass covers
/// the whole target domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub sources: Vec<LabeledSet>,
    pub target_labeled: LabeledSet,
    target_stack: Tensor,
    n_unlabeled: usize,
    classes: usize,
}

impl Batch {
    pub fn new(
        sources: Vec<LabeledSet>,
        target_labeled: LabeledSet,
        target_unlabeled: Option<&Tensor>,
        classes: usize,
    ) -> Result<Self> {
        if target_labeled.is_empty() {
            return Err(Error::Config("batch needs labeled target samples".into()));
        }
        for s in sources.iter().chain([&target_labeled]) {
            if s.onehot.cols() != classes {
                return Err(Error::shape("batch classes", s.onehot.shape(), &[classes]));
            }
        }
        let (target_stack, n_unlabeled) = match target_unlabeled {
            Some(u) => (Tensor::vstack(&[&target_labeled.features, u])?, u.rows()),
            None => (target_labeled.features.clone(), 0),
        };
        Ok(Batch {
            sources,
            target_labeled,
            target_stack,
            n_unlabeled,
            classes,
        })
    }

    pub fn from_task(task: &MultiSourceTask) -> Result<Self> {
        let set = |d: &crate::data::DomainData| {
            let labels = d
                .labels()
                .ok_or_else(|| Error::Config(format!("domain `{}` has no labels", d.name)))?;
            LabeledSet::new(d.features().clone(), labels.to_vec(), task.classes())
        };
        let sources = task.sources().iter().map(set).collect::<Result<Vec<_>>>()?;
        Batch::new(
            sources,
            set(task.target_labeled())?,
            Some(task.target_unlabeled().features()),
            task.classes(),
        )
    }

    /// Same target, no sources.
    pub fn target_only(&self) -> Self {
        Batch {
            sources: Vec::new(),
            ..self.clone()
        }
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Labeled target rows followed by unlabeled target rows.
    pub fn target_features(&self) -> &Tensor {
        &self.target_stack
    }

    pub fn n_labeled(&self) -> usize {
        self.target_labeled.len()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.n_unlabeled
    }

    pub fn n_target(&self) -> usize {
        self.target_stack.rows()
    }
}

//! Loss terms and the two alternating objectives, built on a [`Graph`].

use crate::error::{Error, Result};
use crate::model::batch::Batch;
use crate::model::nodes::{
    classify_node, discriminate_node, transform_node, DiscriminatorNodes, FeatureNodes,
};
use crate::model::params::Domain;
use crate::model::weighting::{
    class_divergence_node, class_means_node, source_mean_operator, source_weight_nodes,
    target_mean_operator,
};
use crate::numerics::{Graph, NodeId, Tensor};

/// How second-layer disagreement between source and target transformers is
/// penalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LgNorm {
    /// Sum of absolute differences over second-layer weights and biases.
    L1,
    /// Sum of squared differences.
    L2,
    /// No penalty.
    Off,
    /// All transformers share one second layer, so there is nothing to
    /// penalize.
    Tied,
}

/// Source weighting scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Weighting {
    /// Weights from class-conditional divergences, differentiated through.
    Conditional,
    /// Every source weighted 1.
    Ones,
}

/// Weights fed to one objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weights<'a> {
    /// Computed on the tape from the current embeddings.
    Conditional,
    /// Constants.
    Fixed(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub beta: f64,
    pub tau: f64,
    pub lg_norm: LgNorm,
    pub leaky_slope: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            beta: 0.03,
            tau: 0.004,
            lg_norm: LgNorm::L1,
            leaky_slope: 0.01,
        }
    }
}

/// Domain labels for the binary discriminator: sources `[1, 0]`, target
/// `[0, 1]`; the inverted label swaps the two components.
#[derive(Debug, Clone, Copy, Default)]
pub struct DomainLabeling;

impl DomainLabeling {
    pub fn true_label(&self, domain: Domain) -> [f64; 2] {
        match domain {
            Domain::Source(_) => [1.0, 0.0],
            Domain::Target => [0.0, 1.0],
        }
    }

    pub fn inverted_label(&self, domain: Domain) -> [f64; 2] {
        let [a, b] = self.true_label(domain);
        [b, a]
    }

    pub fn label(&self, domain: Domain, inverted: bool) -> [f64; 2] {
        if inverted {
            self.inverted_label(domain)
        } else {
            self.true_label(domain)
        }
    }

    fn rows(&self, domain: Domain, inverted: bool, n: usize) -> Tensor {
        let row = self.label(domain, inverted);
        let values = (0..n).flat_map(|_| row).collect();
        Tensor::matrix(n, 2, values).expect("n > 0")
    }
}

/// Forward quantities shared by both objectives.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub source_embeddings: Vec<NodeId>,
    /// Labeled rows first, then unlabeled rows.
    pub target_embedding: NodeId,
    pub source_logits: Vec<NodeId>,
    pub target_logits: NodeId,
    /// Soft labels of the unlabeled target rows, treated as constants.
    pub soft_labels: Option<Tensor>,
    pub deltas: Vec<NodeId>,
    pub weights: Vec<NodeId>,
}

/// Row-wise softmax, max-shifted.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let c = logits.cols();
    let mut out = Vec::with_capacity(logits.len());
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / z));
    }
    Tensor::from_raw(vec![logits.rows(), c], out)
}

/// Embeds every domain, classifies, and computes divergences and weights.
///
/// Soft labels come from the current target logits unless `soft_override`
/// is given; either way they enter the divergences as constants.
pub fn forward_pass(
    g: &mut Graph,
    features: &FeatureNodes,
    batch: &Batch,
    weights: Weights<'_>,
    slope: f64,
    soft_override: Option<&Tensor>,
) -> Result<ForwardPass> {
    if features.sources.len() < batch.num_sources() {
        return Err(Error::Config(format!(
            "model has {} source transformers, batch has {} sources",
            features.sources.len(),
            batch.num_sources()
        )));
    }
    let classes = batch.classes();
    let mut source_embeddings = Vec::with_capacity(batch.num_sources());
    let mut source_logits = Vec::with_capacity(batch.num_sources());
    for (set, t) in batch.sources.iter().zip(&features.sources) {
        let x = g.constant(set.features.clone());
        let e = transform_node(g, t, x, slope)?;
        source_logits.push(classify_node(g, &features.classifier, e)?);
        source_embeddings.push(e);
    }
    let xt = g.constant(batch.target_features().clone());
    let target_embedding = transform_node(g, &features.target, xt, slope)?;
    let target_logits = classify_node(g, &features.classifier, target_embedding)?;

    let n_l = batch.n_labeled();
    let soft_labels = match (soft_override, batch.n_unlabeled()) {
        (_, 0) => None,
        (Some(s), n_u) => {
            if s.shape() != [n_u, classes] {
                return Err(Error::shape("soft label override", s.shape(), &[n_u, classes]));
            }
            Some(s.clone())
        }
        (None, n_u) => {
            let logits = g.value(target_logits);
            let idx: Vec<usize> = (n_l..n_l + n_u).collect();
            Some(softmax_rows(&logits.select_rows(&idx)?))
        }
    };

    let target_op = target_mean_operator(
        &batch.target_labeled.labels,
        soft_labels.as_ref(),
        classes,
    )?;
    let target_means = class_means_node(g, target_op, target_embedding)?;
    let mut deltas = Vec::with_capacity(batch.num_sources());
    for (k, (set, &e)) in batch.sources.iter().zip(&source_embeddings).enumerate() {
        let op = source_mean_operator(&set.labels, classes, k)?;
        let means = class_means_node(g, op, e)?;
        deltas.push(class_divergence_node(g, target_means, means)?);
    }

    let weights = match weights {
        _ if deltas.is_empty() => Vec::new(),
        Weights::Conditional => source_weight_nodes(g, &deltas)?,
        Weights::Fixed(w) => {
            if w.len() != deltas.len() {
                return Err(Error::Validation(format!(
                    "{} fixed weights for {} sources",
                    w.len(),
                    deltas.len()
                )));
            }
            w.iter()
                .map(|&v| Tensor::scalar(v).map(|t| g.constant(t)))
                .collect::<Result<_>>()?
        }
    };

    Ok(ForwardPass {
        source_embeddings,
        target_embedding,
        source_logits,
        target_logits,
        soft_labels,
        deltas,
        weights,
    })
}

/// Weighted classification loss plus `τ(‖f‖² + ‖g‖²)`; the target term is
/// averaged over the labeled target rows only.
pub fn classification_loss_node(
    g: &mut Graph,
    features: &FeatureNodes,
    pass: &ForwardPass,
    batch: &Batch,
    tau: f64,
) -> Result<NodeId> {
    let mut terms = Vec::with_capacity(batch.num_sources() + 2);
    for ((set, &logits), &w) in batch.sources.iter().zip(&pass.source_logits).zip(&pass.weights) {
        let y = g.constant(set.onehot.clone());
        let ce = g.softmax_cross_entropy(logits, y)?;
        terms.push(g.mul(w, ce)?);
    }
    let labeled = g.rows(pass.target_logits, 0, batch.n_labeled())?;
    let y = g.constant(batch.target_labeled.onehot.clone());
    terms.push(g.softmax_cross_entropy(labeled, y)?);

    let norms = features
        .regularized_weights()
        .into_iter()
        .map(|w| g.sum_squares(w))
        .collect::<Result<Vec<_>>>()?;
    let reg = g.sum(&norms)?;
    terms.push(g.scale(reg, tau)?);
    g.sum(&terms)
}

/// Second-layer disagreement between every source and the target.
pub fn lg_node(g: &mut Graph, features: &FeatureNodes, norm: LgNorm) -> Result<NodeId> {
    if matches!(norm, LgNorm::Off | LgNorm::Tied) {
        return g.scalar(0.0);
    }
    let target = features.target.second;
    let mut terms = Vec::new();
    for own in features.source_second_layers().iter().flatten() {
        for (a, b) in [(own.weight, target.weight), (own.bias, target.bias)] {
            let diff = g.sub(a, b)?;
            terms.push(match norm {
                LgNorm::L1 => g.abs_sum(diff)?,
                _ => g.sum_squares(diff)?,
            });
        }
    }
    g.sum(&terms)
}

/// Weighted squared-error domain loss against true or inverted labels; the
/// target term covers every target row.
pub fn domain_loss_node(
    g: &mut Graph,
    disc: &DiscriminatorNodes,
    source_embeddings: &[NodeId],
    target_embedding: NodeId,
    weights: &[NodeId],
    inverted: bool,
) -> Result<NodeId> {
    let labeling = DomainLabeling;
    let mut terms = Vec::with_capacity(source_embeddings.len() + 1);
    for (k, (&e, &w)) in source_embeddings.iter().zip(weights).enumerate() {
        let out = discriminate_node(g, disc, e)?;
        let z = g.constant(labeling.rows(Domain::Source(k), inverted, g.value(e).rows()));
        let se = g.squared_error(out, z)?;
        terms.push(g.mul(w, se)?);
    }
    let out = discriminate_node(g, disc, target_embedding)?;
    let n_t = g.value(target_embedding).rows();
    let z = g.constant(labeling.rows(Domain::Target, inverted, n_t));
    terms.push(g.squared_error(out, z)?);
    g.sum(&terms)
}

/// Node handles for the feature/classifier objective and its parts.
#[derive(Debug, Clone, Copy)]
pub struct FgTerms {
    pub total: NodeId,
    pub classification: NodeId,
    pub lg: NodeId,
    pub domain_inverted: NodeId,
}

/// Classification loss + second-layer disagreement + β·inverted domain loss.
pub fn fg_objective_nodes(
    g: &mut Graph,
    features: &FeatureNodes,
    disc: &DiscriminatorNodes,
    pass: &ForwardPass,
    batch: &Batch,
    cfg: &ObjectiveConfig,
) -> Result<FgTerms> {
    if !(cfg.beta >= 0.0 && cfg.tau >= 0.0) {
        return Err(Error::Config(format!(
            "beta and tau must be >= 0, got {} and {}",
            cfg.beta, cfg.tau
        )));
    }
    let classification = classification_loss_node(g, features, pass, batch, cfg.tau)?;
    let lg = lg_node(g, features, cfg.lg_norm)?;
    let domain_inverted = domain_loss_node(
        g,
        disc,
        &pass.source_embeddings,
        pass.target_embedding,
        &pass.weights,
        true,
    )?;
    let adversarial = g.scale(domain_inverted, cfg.beta)?;
    let total = g.sum(&[classification, lg, adversarial])?;
    Ok(FgTerms {
        total,
        classification,
        lg,
        domain_inverted,
    })
}

/// Discriminator objective over constant embeddings and weights.
pub fn d_objective_nodes(
    g: &mut Graph,
    disc: &DiscriminatorNodes,
    source_embeddings: &[Tensor],
    target_embedding: &Tensor,
    weights: &[f64],
) -> Result<NodeId> {
    if weights.len() != source_embeddings.len() {
        return Err(Error::Validation(format!(
            "{} weights for {} sources",
            weights.len(),
            source_embeddings.len()
        )));
    }
    let embs: Vec<NodeId> = source_embeddings
        .iter()
        .map(|e| g.constant(e.clone()))
        .collect();
    let target = g.constant(target_embedding.clone());
    let ws = weights
        .iter()
        .map(|&w| g.scalar(w))
        .collect::<Result<Vec<_>>>()?;
    domain_loss_node(g, disc, &embs, target, &ws, false)
}

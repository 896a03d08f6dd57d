//! Alternating full-batch training: one discriminator step, then one
//! transformer/classifier step, per iteration.

mod init;

#[cfg(test)]
mod tests;

pub use init::{init_params, TaskShape};

use crate::data::{HeldOutLabels, MultiSourceTask, UnlabeledTarget};
use crate::error::{Error, Result};
use crate::model::objective::classification_loss_node;
use crate::model::{
    classify, d_objective_nodes, embed, fg_objective_nodes, forward_pass, Batch, CwanParams,
    DiscriminatorNodes, Domain, FeatureNodes, LgNorm, ObjectiveConfig, Weighting, Weights,
};
use crate::numerics::{AdamConfig, AdamState, Graph, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub beta: f64,
    pub tau: f64,
    /// Width of the shared subspace.
    pub d_c: usize,
    /// Width of every transformer's first layer.
    pub hidden: usize,
    pub lr_fg: f64,
    pub lr_d: f64,
    pub iterations: usize,
    pub seed: u64,
    pub lg_norm: LgNorm,
    pub weighting: Weighting,
    pub leaky_slope: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 0.03,
            tau: 0.004,
            d_c: 256,
            hidden: 256,
            lr_fg: 0.004,
            lr_d: 0.001,
            iterations: 1000,
            seed: 0,
            lg_norm: LgNorm::L1,
            weighting: Weighting::Conditional,
            leaky_slope: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            beta: self.beta,
            tau: self.tau,
            lg_norm: self.lg_norm,
            leaky_slope: self.leaky_slope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !nonneg(self.beta) || !nonneg(self.tau) || !nonneg(self.leaky_slope) {
            return Err(Error::Config(format!(
                "beta, tau and leaky slope must be >= 0 (got {}, {}, {})",
                self.beta, self.tau, self.leaky_slope
            )));
        }
        if !pos(self.lr_fg) || !pos(self.lr_d) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.d_c == 0 || self.hidden == 0 {
            return Err(Error::Config("d_c and hidden must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss_fg: f64,
    pub loss_lg: f64,
    pub loss_dg_inverted: f64,
    pub loss_d: f64,
    pub deltas: Vec<f64>,
    pub weights: Vec<f64>,
    pub source_accuracy: Vec<f64>,
    /// Accuracy on the unlabeled target split, `NaN` when not evaluated.
    pub target_accuracy: f64,
}

/// One record per iteration, describing the parameters that iteration
/// started from, plus the parameters after the last update.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<IterationRecord>,
    pub final_params: CwanParams,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

/// Adam state for the two alternating parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub fg: AdamState,
    pub d: AdamState,
}

impl Optimizers {
    pub fn new(params: &CwanParams, config: &TrainConfig) -> Result<Self> {
        Ok(Optimizers {
            fg: AdamState::new(AdamConfig::with_learning_rate(config.lr_fg), params.fg_tensors())?,
            d: AdamState::new(AdamConfig::with_learning_rate(config.lr_d), params.d_tensors())?,
        })
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax matches the label.
pub fn accuracy_from_scores(scores: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Validation("accuracy over an empty set".into()));
    }
    if scores.rows() != labels.len() {
        return Err(Error::shape("accuracy", scores.shape(), &[labels.len()]));
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &l)| argmax(scores.row(i)) == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Accuracy of the current model on the unlabeled target split.
pub fn evaluate_accuracy(params: &CwanParams, target: &UnlabeledTarget, slope: f64) -> Result<f64> {
    let emb = embed(params, Domain::Target, target.features(), slope)?;
    let logits = classify(&params.classifier, &emb)?;
    accuracy_from_scores(&logits, target.held_out().as_slice())
}

/// One iteration of alternating optimization.
///
/// Soft labels, divergences and weights are computed from the incoming
/// parameters; the discriminator then takes one Adam step on its objective
/// with embeddings and weights held constant, and finally transformers and
/// classifier take one Adam step against the updated (frozen) discriminator.
pub fn train_step(
    params: &mut CwanParams,
    optimizers: &mut Optimizers,
    batch: &Batch,
    evaluation: Option<&HeldOutLabels>,
    config: &TrainConfig,
    iteration: usize,
) -> Result<IterationRecord> {
    let objective = config.objective();
    let ones = vec![1.0; batch.num_sources()];
    let weights_mode = match config.weighting {
        Weighting::Conditional => Weights::Conditional,
        Weighting::Ones => Weights::Fixed(&ones),
    };

    let mut g = Graph::new();
    let features = FeatureNodes::register(&mut g, params, true);
    let pass = forward_pass(
        &mut g,
        &features,
        batch,
        weights_mode,
        config.leaky_slope,
        None,
    )?;
    let deltas: Vec<f64> = pass.deltas.iter().map(|&d| g.value(d).item()).collect();
    let weights: Vec<f64> = pass.weights.iter().map(|&w| g.value(w).item()).collect();

    // Discriminator step; g and f are constants here.
    let source_embs: Vec<Tensor> = pass
        .source_embeddings
        .iter()
        .map(|&e| g.value(e).clone())
        .collect();
    let target_emb = g.value(pass.target_embedding).clone();
    let mut dg = Graph::new();
    let disc = DiscriminatorNodes::register(&mut dg, params, true);
    let loss_d_node = d_objective_nodes(&mut dg, &disc, &source_embs, &target_emb, &weights)?;
    let loss_d = dg.value(loss_d_node).item();
    let d_grads = dg.backward(loss_d_node)?.wrt(&disc.ids());
    optimizers.d.update(&mut params.d_tensors_mut(), &d_grads)?;

    // Transformer/classifier step against the updated, frozen discriminator.
    let frozen = DiscriminatorNodes::register(&mut g, params, false);
    let terms = fg_objective_nodes(&mut g, &features, &frozen, &pass, batch, &objective)?;
    let fg_grads = g.backward(terms.total)?.wrt(features.ids());

    let source_accuracy = batch
        .sources
        .iter()
        .zip(&pass.source_logits)
        .map(|(s, &l)| accuracy_from_scores(g.value(l), &s.labels))
        .collect::<Result<Vec<_>>>()?;
    let target_accuracy = match evaluation {
        Some(labels) => {
            let n_l = batch.n_labeled();
            let rows: Vec<usize> = (n_l..batch.n_target()).collect();
            let logits = g.value(pass.target_logits).select_rows(&rows)?;
            accuracy_from_scores(&logits, labels.as_slice())?
        }
        None => f64::NAN,
    };
    let record = IterationRecord {
        iteration,
        loss_fg: g.value(terms.classification).item(),
        loss_lg: g.value(terms.lg).item(),
        loss_dg_inverted: g.value(terms.domain_inverted).item(),
        loss_d,
        deltas,
        weights,
        source_accuracy,
        target_accuracy,
    };
    optimizers.fg.update(&mut params.fg_tensors_mut(), &fg_grads)?;
    Ok(record)
}

fn check_trainable(task: &MultiSourceTask, params: &CwanParams, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    params.validate()?;
    if params.num_sources() != task.num_sources() {
        return Err(Error::Config(format!(
            "parameters have {} source transformers, task has {} sources",
            params.num_sources(),
            task.num_sources()
        )));
    }
    if params.classes() != task.classes() {
        return Err(Error::Config(format!(
            "classifier has {} outputs, task has {} classes",
            params.classes(),
            task.classes()
        )));
    }
    for (k, (s, t)) in task.sources().iter().zip(&params.sources).enumerate() {
        if s.dim() != t.input_dim() {
            return Err(Error::Config(format!(
                "source {} has dimension {}, its transformer expects {}",
                k + 1,
                s.dim(),
                t.input_dim()
            )));
        }
    }
    if task.target_dim() != params.target.input_dim() {
        return Err(Error::Config(format!(
            "target has dimension {}, its transformer expects {}",
            task.target_dim(),
            params.target.input_dim()
        )));
    }
    Ok(())
}

/// Trains from a seeded initialization.
pub fn train(task: &MultiSourceTask, config: &TrainConfig) -> Result<TrainTrace> {
    if task.num_sources() == 0 {
        return Err(Error::Config("adversarial training needs at least one source".into()));
    }
    config.validate()?;
    let params = init_params(&TaskShape::of(task), config)?;
    train_from(params, task, config)
}

/// Trains from the given parameters.
pub fn train_from(
    mut params: CwanParams,
    task: &MultiSourceTask,
    config: &TrainConfig,
) -> Result<TrainTrace> {
    if task.num_sources() == 0 {
        return Err(Error::Config("adversarial training needs at least one source".into()));
    }
    check_trainable(task, &params, config)?;
    let batch = Batch::from_task(task)?;
    let mut optimizers = Optimizers::new(&params, config)?;
    let held_out = task.target_unlabeled().held_out();
    let mut records = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        records.push(train_step(
            &mut params,
            &mut optimizers,
            &batch,
            Some(held_out),
            config,
            it,
        )?);
    }
    Ok(TrainTrace {
        records,
        final_params: params,
    })
}

/// Which labeled data a plain supervised baseline sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupervisedScope {
    /// Labeled target samples only.
    TargetOnly,
    /// Every source plus the labeled target samples, all weighted 1.
    AllLabeled,
}

/// Supervised training of transformers and classifier with no adversary, no
/// second-layer penalty and unit source weights.
pub fn train_supervised(
    task: &MultiSourceTask,
    config: &TrainConfig,
    scope: SupervisedScope,
) -> Result<TrainTrace> {
    config.validate()?;
    let params = init_params(&TaskShape::of(task), config)?;
    train_supervised_from(params, task, config, scope)
}

pub fn train_supervised_from(
    mut params: CwanParams,
    task: &MultiSourceTask,
    config: &TrainConfig,
    scope: SupervisedScope,
) -> Result<TrainTrace> {
    let mut batch = Batch::from_task(task)?;
    if scope == SupervisedScope::TargetOnly {
        batch = batch.target_only();
        params.sources.clear();
    } else {
        check_trainable(task, &params, config)?;
    }
    config.validate()?;
    params.validate()?;
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(config.lr_fg), params.fg_tensors())?;
    let ones = vec![1.0; batch.num_sources()];
    let held_out = task.target_unlabeled().held_out();
    let mut records = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let mut g = Graph::new();
        let features = FeatureNodes::register(&mut g, &params, true);
        let pass = forward_pass(
            &mut g,
            &features,
            &batch,
            Weights::Fixed(&ones),
            config.leaky_slope,
            None,
        )?;
        let loss = classification_loss_node(&mut g, &features, &pass, &batch, config.tau)?;
        let grads = g.backward(loss)?.wrt(features.ids());
        let n_l = batch.n_labeled();
        let rows: Vec<usize> = (n_l..batch.n_target()).collect();
        let target_logits = g.value(pass.target_logits).select_rows(&rows)?;
        let source_accuracy = batch
            .sources
            .iter()
            .zip(&pass.source_logits)
            .map(|(s, &l)| accuracy_from_scores(g.value(l), &s.labels))
            .collect::<Result<Vec<_>>>()?;
        records.push(IterationRecord {
            iteration: it,
            loss_fg: g.value(loss).item(),
            loss_lg: 0.0,
            loss_dg_inverted: 0.0,
            loss_d: 0.0,
            deltas: pass.deltas.iter().map(|&d| g.value(d).item()).collect(),
            weights: ones.clone(),
            source_accuracy,
            target_accuracy: accuracy_from_scores(&target_logits, held_out.as_slice())?,
        });
        adam.update(&mut params.fg_tensors_mut(), &grads)?;
    }
    Ok(TrainTrace {
        records,
        final_params: params,
    })
}

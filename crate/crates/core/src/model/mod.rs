//! The CWAN architecture and its losses.
//!
//! Everything is defined once on the gradient tape (see [`objective`]); the
//! free functions here are value-level conveniences that build a throwaway
//! graph of constants and read the result back.

mod batch;
mod check;
mod nodes;
pub mod objective;
mod params;
mod weighting;

#[cfg(test)]
mod tests;

pub use batch::{onehot, Batch, LabeledSet};
pub use check::{check_d_gradients, check_fg_gradients};
pub use nodes::{
    classify_node, discriminate_node, transform_node, DenseNodes, DiscriminatorNodes,
    FeatureNodes, TransformerNodes,
};
pub use objective::{
    d_objective_nodes, fg_objective_nodes, forward_pass, softmax_rows, DomainLabeling, FgTerms,
    ForwardPass, LgNorm, ObjectiveConfig, Weighting, Weights,
};
pub use params::{
    ClassifierParams, CwanParams, Dense, DiscriminatorParams, Domain, TransformerParams,
};
pub use weighting::{
    source_mean_operator, source_weight_nodes, source_weights, target_mean_operator,
    SourceWeightState, SOFT_LABEL_TOLERANCE,
};

use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor};
use nodes::dense_constant;

/// Embeds `x` with one transformer.
pub fn transform(params: &TransformerParams, x: &Tensor, slope: f64) -> Result<Tensor> {
    let second = params.second.as_ref().ok_or_else(|| {
        Error::Config("transformer borrows a tied second layer; use `embed`".into())
    })?;
    apply_transformer(&params.first, second, x, slope)
}

/// Embeds `x` with the transformer of `domain`, resolving tied second layers.
pub fn embed(params: &CwanParams, domain: Domain, x: &Tensor, slope: f64) -> Result<Tensor> {
    let first = &params.transformer(domain).first;
    apply_transformer(first, params.second_layer(domain), x, slope)
}

fn apply_transformer(first: &Dense, second: &Dense, x: &Tensor, slope: f64) -> Result<Tensor> {
    let mut g = Graph::new();
    let t = TransformerNodes {
        first: dense_constant(&mut g, first),
        second: dense_constant(&mut g, second),
    };
    let xs = g.constant(x.clone());
    let out = transform_node(&mut g, &t, xs, slope)?;
    Ok(g.value(out).clone())
}

/// Linear logits; no softmax.
pub fn classify(params: &ClassifierParams, emb: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let c = dense_constant(&mut g, &params.layer);
    let e = g.constant(emb.clone());
    let out = classify_node(&mut g, &c, e)?;
    Ok(g.value(out).clone())
}

pub fn discriminate(params: &DiscriminatorParams, emb: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let d = DiscriminatorNodes {
        hidden: dense_constant(&mut g, &params.hidden),
        output: dense_constant(&mut g, &params.output),
    };
    let e = g.constant(emb.clone());
    let out = discriminate_node(&mut g, &d, e)?;
    Ok(g.value(out).clone())
}

/// Class probabilities for unlabeled target samples.
pub fn soft_labels(params: &CwanParams, target_unlabeled: &Tensor, slope: f64) -> Result<Tensor> {
    let emb = embed(params, Domain::Target, target_unlabeled, slope)?;
    Ok(softmax_rows(&classify(&params.classifier, &emb)?))
}

pub fn loss_lg(params: &CwanParams, norm: LgNorm) -> Result<f64> {
    let mut g = Graph::new();
    let f = FeatureNodes::register(&mut g, params, false);
    let n = objective::lg_node(&mut g, &f, norm)?;
    Ok(g.value(n).item())
}

/// Embeddings of labeled samples.
#[derive(Debug, Clone, Copy)]
pub struct LabeledEmbeddings<'a> {
    pub embeddings: &'a Tensor,
    pub labels: &'a [usize],
}

/// Embeddings of unlabeled samples with their soft labels.
#[derive(Debug, Clone, Copy)]
pub struct SoftEmbeddings<'a> {
    pub embeddings: &'a Tensor,
    pub soft_labels: &'a Tensor,
}

/// Class-conditional mean discrepancy between one source and the target:
/// `(1/C)·Σ_c ‖target_mean_c − source_mean_c‖²`, where the target mean of
/// class `c` blends the labeled class-`c` samples with every unlabeled sample
/// weighted by its soft label for `c`.
pub fn conditional_mmd(
    source: LabeledEmbeddings<'_>,
    target_labeled: LabeledEmbeddings<'_>,
    target_unlabeled: Option<SoftEmbeddings<'_>>,
    classes: usize,
) -> Result<f64> {
    let mut g = Graph::new();
    let stacked = match target_unlabeled {
        Some(u) => Tensor::vstack(&[target_labeled.embeddings, u.embeddings])?,
        None => target_labeled.embeddings.clone(),
    };
    let target_op = target_mean_operator(
        target_labeled.labels,
        target_unlabeled.map(|u| u.soft_labels),
        classes,
    )?;
    let t = g.constant(stacked);
    let target_means = weighting::class_means_node(&mut g, target_op, t)?;
    let s = g.constant(source.embeddings.clone());
    let source_means =
        weighting::class_means_node(&mut g, source_mean_operator(source.labels, classes, 0)?, s)?;
    let d = weighting::class_divergence_node(&mut g, target_means, source_means)?;
    Ok(g.value(d).item())
}

/// Value-level parts of the feature/classifier objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgValues {
    pub total: f64,
    pub classification: f64,
    pub lg: f64,
    pub domain_inverted: f64,
}

fn constant_pass(
    g: &mut Graph,
    params: &CwanParams,
    batch: &Batch,
    weights: Weights<'_>,
    slope: f64,
) -> Result<(FeatureNodes, DiscriminatorNodes, ForwardPass)> {
    params.validate()?;
    let f = FeatureNodes::register(g, params, false);
    let d = DiscriminatorNodes::register(g, params, false);
    let pass = forward_pass(g, &f, batch, weights, slope, None)?;
    Ok((f, d, pass))
}

/// Weighted classification loss with the `τ` regularizer.
pub fn loss_fg_w(
    params: &CwanParams,
    batch: &Batch,
    weights: &[f64],
    tau: f64,
    slope: f64,
) -> Result<f64> {
    let mut g = Graph::new();
    let (f, _, pass) = constant_pass(&mut g, params, batch, Weights::Fixed(weights), slope)?;
    let n = objective::classification_loss_node(&mut g, &f, &pass, batch, tau)?;
    Ok(g.value(n).item())
}

/// Weighted domain loss against true (`inverted = false`) or swapped labels.
pub fn loss_dg_w(
    params: &CwanParams,
    batch: &Batch,
    weights: &[f64],
    inverted: bool,
    slope: f64,
) -> Result<f64> {
    let mut g = Graph::new();
    let (_, d, pass) = constant_pass(&mut g, params, batch, Weights::Fixed(weights), slope)?;
    let n = objective::domain_loss_node(
        &mut g,
        &d,
        &pass.source_embeddings,
        pass.target_embedding,
        &pass.weights,
        inverted,
    )?;
    Ok(g.value(n).item())
}

/// The quantity minimized over transformers and classifier.
pub fn objective_fg(
    params: &CwanParams,
    batch: &Batch,
    weights: Weights<'_>,
    cfg: &ObjectiveConfig,
) -> Result<FgValues> {
    let mut g = Graph::new();
    let (f, d, pass) = constant_pass(&mut g, params, batch, weights, cfg.leaky_slope)?;
    let t = fg_objective_nodes(&mut g, &f, &d, &pass, batch, cfg)?;
    Ok(FgValues {
        total: g.value(t.total).item(),
        classification: g.value(t.classification).item(),
        lg: g.value(t.lg).item(),
        domain_inverted: g.value(t.domain_inverted).item(),
    })
}

/// The quantity minimized over the discriminator.
pub fn objective_d(params: &CwanParams, batch: &Batch, weights: &[f64], slope: f64) -> Result<f64> {
    loss_dg_w(params, batch, weights, false, slope)
}

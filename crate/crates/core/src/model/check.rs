//! Finite-difference checks of both objectives' gradients.

use crate::error::Result;
use crate::model::batch::Batch;
use crate::model::nodes::{DiscriminatorNodes, FeatureNodes};
use crate::model::objective::{
    d_objective_nodes, fg_objective_nodes, forward_pass, ObjectiveConfig, Weights,
};
use crate::model::params::CwanParams;
use crate::numerics::{grad_check, GradCheck, Graph, Tensor};

fn soft_labels_at(params: &CwanParams, batch: &Batch, slope: f64) -> Result<Option<Tensor>> {
    let mut g = Graph::new();
    let f = FeatureNodes::register(&mut g, params, false);
    let ones = vec![1.0; batch.num_sources()];
    Ok(forward_pass(&mut g, &f, batch, Weights::Fixed(&ones), slope, None)?.soft_labels)
}

/// Checks the transformer/classifier objective with respect to every
/// transformer and classifier tensor, discriminator frozen. Soft labels are
/// held at their value at `params`, matching how training treats them.
pub fn check_fg_gradients(
    params: &CwanParams,
    batch: &Batch,
    weighting: Weights<'_>,
    cfg: &ObjectiveConfig,
    step: f64,
) -> Result<GradCheck> {
    params.validate()?;
    let soft = soft_labels_at(params, batch, cfg.leaky_slope)?;
    let point: Vec<Tensor> = params.fg_tensors().into_iter().cloned().collect();
    grad_check(&point, step, |g, ids| {
        let f = FeatureNodes::assemble(params, ids)?;
        let d = DiscriminatorNodes::register(g, params, false);
        let pass = forward_pass(g, &f, batch, weighting, cfg.leaky_slope, soft.as_ref())?;
        Ok(fg_objective_nodes(g, &f, &d, &pass, batch, cfg)?.total)
    })
}

/// Checks the discriminator objective with respect to the discriminator
/// tensors, with embeddings computed at `params` and `weights` constant.
pub fn check_d_gradients(
    params: &CwanParams,
    batch: &Batch,
    weights: &[f64],
    slope: f64,
    step: f64,
) -> Result<GradCheck> {
    params.validate()?;
    let mut g = Graph::new();
    let f = FeatureNodes::register(&mut g, params, false);
    let pass = forward_pass(&mut g, &f, batch, Weights::Fixed(weights), slope, None)?;
    let sources: Vec<Tensor> = pass
        .source_embeddings
        .iter()
        .map(|&e| g.value(e).clone())
        .collect();
    let target = g.value(pass.target_embedding).clone();
    let point: Vec<Tensor> = params.d_tensors().into_iter().cloned().collect();
    grad_check(&point, step, |g, ids| {
        let d = DiscriminatorNodes::assemble(ids)?;
        d_objective_nodes(g, &d, &sources, &target, weights)
    })
}

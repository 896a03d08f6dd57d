//! Class-conditional mean discrepancy between each source and the target, and
//! the source weights derived from it.
//!
//! Per-class means are written as a constant averaging operator applied to an
//! embedding matrix, so the whole divergence is two matmuls, a difference and
//! a sum of squares on the tape; gradients reach every embedding while the
//! soft labels inside the operator stay constant.

use crate::error::{Error, Result};
use crate::numerics::{logistic, Graph, NodeId, Tensor};

/// Tolerance on soft-label row sums.
pub const SOFT_LABEL_TOLERANCE: f64 = 1e-9;

/// Per-source divergences and the weights computed from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceWeightState {
    pub deltas: Vec<f64>,
    pub weights: Vec<f64>,
}

fn check_soft_labels(soft: &Tensor, classes: usize) -> Result<()> {
    if soft.rank() != 2 || soft.cols() != classes {
        return Err(Error::shape("soft labels", soft.shape(), &[classes]));
    }
    for i in 0..soft.rows() {
        let row = soft.row(i);
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > SOFT_LABEL_TOLERANCE {
            return Err(Error::Validation(format!(
                "soft-label row {i} is not a distribution: {row:?}"
            )));
        }
    }
    Ok(())
}

/// `C × (n_l + n_u)` operator whose product with the stacked target embedding
/// gives the blended per-class target means: labeled samples of class `c`
/// count fully, unlabeled sample `i` counts with weight `ỹ_{i,c}`.
pub fn target_mean_operator(
    labels: &[usize],
    soft: Option<&Tensor>,
    classes: usize,
) -> Result<Tensor> {
    if let Some(s) = soft {
        check_soft_labels(s, classes)?;
    }
    let n_l = labels.len();
    let n_u = soft.map_or(0, Tensor::rows);
    let width = n_l + n_u;
    let mut denom = vec![0.0; classes];
    for &l in labels {
        denom[l] += 1.0;
    }
    if let Some(s) = soft {
        for i in 0..n_u {
            for (d, p) in denom.iter_mut().zip(s.row(i)) {
                *d += p;
            }
        }
    }
    if let Some(c) = denom.iter().position(|&d| d <= 0.0) {
        return Err(Error::Config(format!(
            "target class {c} has no labeled samples and zero soft-label mass"
        )));
    }
    let mut op = vec![0.0; classes * width];
    for (i, &l) in labels.iter().enumerate() {
        op[l * width + i] = 1.0 / denom[l];
    }
    if let Some(s) = soft {
        for i in 0..n_u {
            for c in 0..classes {
                op[c * width + n_l + i] = s.get(i, c) / denom[c];
            }
        }
    }
    Tensor::matrix(classes, width, op)
}

/// `C × n` per-class averaging operator for a fully labeled source.
pub fn source_mean_operator(labels: &[usize], classes: usize, source: usize) -> Result<Tensor> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Config(format!(
            "source {} has no samples of class {c}",
            source + 1
        )));
    }
    let n = labels.len();
    let mut op = vec![0.0; classes * n];
    for (i, &l) in labels.iter().enumerate() {
        op[l * n + i] = 1.0 / counts[l] as f64;
    }
    Tensor::matrix(classes, n, op)
}

/// `(1/C)·Σ_c ‖target_mean_c − source_mean_c‖²` from two `C × d` mean nodes.
pub fn class_divergence_node(
    g: &mut Graph,
    target_means: NodeId,
    source_means: NodeId,
) -> Result<NodeId> {
    let classes = g.value(target_means).rows();
    let diff = g.sub(target_means, source_means)?;
    let ss = g.sum_squares(diff)?;
    g.scale(ss, 1.0 / classes as f64)
}

pub fn class_means_node(g: &mut Graph, operator: Tensor, embeddings: NodeId) -> Result<NodeId> {
    let op = g.constant(operator);
    g.matmul(op, embeddings)
}

/// `w_k = (1/(K−1))·Σ_{j≠k} σ(δ_j)` on the tape; a single source gets the
/// constant weight 1.
pub fn source_weight_nodes(g: &mut Graph, deltas: &[NodeId]) -> Result<Vec<NodeId>> {
    match deltas.len() {
        0 => Err(Error::Config("source weights need at least one source".into())),
        1 => Ok(vec![g.scalar(1.0)?]),
        k => {
            let squashed = deltas
                .iter()
                .map(|&d| g.sigmoid(d))
                .collect::<Result<Vec<_>>>()?;
            (0..k)
                .map(|own| {
                    let others: Vec<NodeId> = squashed
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != own)
                        .map(|(_, &s)| s)
                        .collect();
                    let total = g.sum(&others)?;
                    g.scale(total, 1.0 / (k - 1) as f64)
                })
                .collect()
        }
    }
}

/// Plain-value weights; identical arithmetic to [`source_weight_nodes`].
pub fn source_weights(deltas: &[f64]) -> Result<SourceWeightState> {
    if let Some(bad) = deltas.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::Validation(format!(
            "divergences must be finite and non-negative, got {bad}"
        )));
    }
    let weights = match deltas.len() {
        0 => return Err(Error::Config("source weights need at least one source".into())),
        1 => vec![1.0],
        k => {
            let squashed: Vec<f64> = deltas.iter().map(|&d| logistic(d)).collect();
            (0..k)
                .map(|own| {
                    let mut total = 0.0;
                    for (j, s) in squashed.iter().enumerate() {
                        if j != own {
                            total += s;
                        }
                    }
                    total * (1.0 / (k - 1) as f64)
                })
                .collect()
        }
    };
    Ok(SourceWeightState {
        deltas: deltas.to_vec(),
        weights,
    })
}

//! Parameter leaves on a [`Graph`] and the layer compositions built from them.

use crate::error::{Error, Result};
use crate::model::params::{CwanParams, Dense};
use crate::numerics::{Graph, NodeId, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseNodes {
    pub weight: NodeId,
    pub bias: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformerNodes {
    pub first: DenseNodes,
    pub second: DenseNodes,
}

/// Graph handles for every transformer and the classifier.
#[derive(Debug, Clone)]
pub struct FeatureNodes {
    pub sources: Vec<TransformerNodes>,
    pub target: TransformerNodes,
    pub classifier: DenseNodes,
    /// Second-layer blocks owned by each source; `None` when tied.
    own_second: Vec<Option<DenseNodes>>,
    ids: Vec<NodeId>,
}

impl FeatureNodes {
    /// Adds the transformer and classifier tensors as leaves, trainable or
    /// constant.
    pub fn register(g: &mut Graph, params: &CwanParams, trainable: bool) -> Self {
        let ids = leaves(g, params.fg_tensors(), trainable);
        Self::assemble(params, &ids).expect("ids come from the same params")
    }

    /// Rebuilds the structure over leaves already on the graph, given in
    /// [`CwanParams::fg_tensors`] order.
    pub fn assemble(params: &CwanParams, ids: &[NodeId]) -> Result<Self> {
        let expected = params.fg_tensors().len();
        if ids.len() != expected {
            return Err(Error::Validation(format!(
                "expected {expected} feature/classifier leaves, got {}",
                ids.len()
            )));
        }
        let mut cursor = ids.iter().copied();
        let mut next_dense = || DenseNodes {
            weight: cursor.next().expect("length checked"),
            bias: cursor.next().expect("length checked"),
        };
        let mut firsts = Vec::new();
        let mut seconds = Vec::new();
        for t in params.sources.iter().chain([&params.target]) {
            firsts.push(next_dense());
            seconds.push(t.second.as_ref().map(|_| next_dense()));
        }
        let classifier = next_dense();
        let target_second = seconds.pop().flatten().expect("target owns its second layer");
        let target_first = firsts.pop().expect("target present");
        let sources = firsts
            .iter()
            .zip(&seconds)
            .map(|(&first, second)| TransformerNodes {
                first,
                second: second.unwrap_or(target_second),
            })
            .collect();
        Ok(FeatureNodes {
            sources,
            target: TransformerNodes {
                first: target_first,
                second: target_second,
            },
            classifier,
            own_second: seconds,
            ids: ids.to_vec(),
        })
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    /// Weight matrices covered by the `τ(‖f‖² + ‖g‖²)` regularizer: every
    /// distinct transformer weight and the classifier weight, no biases.
    pub fn regularized_weights(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self.sources.iter().map(|s| s.first.weight).collect();
        out.extend(self.own_second.iter().flatten().map(|d| d.weight));
        out.push(self.target.first.weight);
        out.push(self.target.second.weight);
        out.push(self.classifier.weight);
        out
    }

    /// Second-layer blocks owned by the sources (empty entries when tied).
    pub fn source_second_layers(&self) -> &[Option<DenseNodes>] {
        &self.own_second
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscriminatorNodes {
    pub hidden: DenseNodes,
    pub output: DenseNodes,
}

impl DiscriminatorNodes {
    pub fn register(g: &mut Graph, params: &CwanParams, trainable: bool) -> Self {
        let ids = leaves(g, params.d_tensors(), trainable);
        Self::assemble(&ids).expect("four discriminator tensors")
    }

    /// `ids` in [`CwanParams::d_tensors`] order.
    pub fn assemble(ids: &[NodeId]) -> Result<Self> {
        match *ids {
            [hw, hb, ow, ob] => Ok(DiscriminatorNodes {
                hidden: DenseNodes {
                    weight: hw,
                    bias: hb,
                },
                output: DenseNodes {
                    weight: ow,
                    bias: ob,
                },
            }),
            _ => Err(Error::Validation(format!(
                "expected 4 discriminator leaves, got {}",
                ids.len()
            ))),
        }
    }

    pub fn ids(&self) -> Vec<NodeId> {
        vec![
            self.hidden.weight,
            self.hidden.bias,
            self.output.weight,
            self.output.bias,
        ]
    }
}

fn leaves(g: &mut Graph, tensors: Vec<&Tensor>, trainable: bool) -> Vec<NodeId> {
    tensors
        .into_iter()
        .map(|t| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        })
        .collect()
}

pub(crate) fn dense_constant(g: &mut Graph, d: &Dense) -> DenseNodes {
    DenseNodes {
        weight: g.constant(d.weight.clone()),
        bias: g.constant(d.bias.clone()),
    }
}

/// `leaky(leaky(x·W1 + b1)·W2 + b2)`.
pub fn transform_node(
    g: &mut Graph,
    t: &TransformerNodes,
    x: NodeId,
    slope: f64,
) -> Result<NodeId> {
    let h = g.affine(x, t.first.weight, t.first.bias)?;
    let h = g.leaky_relu(h, slope)?;
    let e = g.affine(h, t.second.weight, t.second.bias)?;
    g.leaky_relu(e, slope)
}

/// Linear logits.
pub fn classify_node(g: &mut Graph, c: &DenseNodes, emb: NodeId) -> Result<NodeId> {
    g.affine(emb, c.weight, c.bias)
}

/// `linear(relu(affine(emb)))`, two outputs per row.
pub fn discriminate_node(g: &mut Graph, d: &DiscriminatorNodes, emb: NodeId) -> Result<NodeId> {
    let h = g.affine(emb, d.hidden.weight, d.hidden.bias)?;
    let h = g.relu(h)?;
    g.affine(h, d.output.weight, d.output.bias)
}

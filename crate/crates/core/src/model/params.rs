use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Fully connected layer: `weight` is `in × out`, `bias` has length `out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.rank() != 1 || bias.len() != weight.cols() {
            return Err(Error::shape("dense layer", weight.shape(), bias.shape()));
        }
        Ok(Dense { weight, bias })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Tensor::zeros(&[input, output]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Two-layer feature transformer for one domain.
///
/// `second` is `None` when the domain borrows the target's second layer
/// (tied second layers); the target transformer always owns its own.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams {
    pub first: Dense,
    pub second: Option<Dense>,
}

impl TransformerParams {
    pub fn input_dim(&self) -> usize {
        self.first.input_dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub layer: Dense,
}

impl ClassifierParams {
    pub fn classes(&self) -> usize {
        self.layer.output_dim()
    }
}

/// Hidden ReLU layer followed by a linear layer with two outputs
/// (source vs. target).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams {
    pub hidden: Dense,
    pub output: Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Source(usize),
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CwanParams {
    pub sources: Vec<TransformerParams>,
    pub target: TransformerParams,
    pub classifier: ClassifierParams,
    pub discriminator: DiscriminatorParams,
}

impl CwanParams {
    pub fn validate(&self) -> Result<()> {
        let target_second = self
            .target
            .second
            .as_ref()
            .ok_or_else(|| Error::Config("target transformer has no second layer".into()))?;
        let dc = target_second.output_dim();
        let hidden = target_second.input_dim();
        for (k, t) in self.sources.iter().chain([&self.target]).enumerate() {
            if t.first.output_dim() != hidden {
                return Err(Error::Config(format!(
                    "transformer {k}: first layer width {} differs from shared hidden width {hidden}",
                    t.first.output_dim()
                )));
            }
            if let Some(s) = &t.second {
                if s.weight.shape() != target_second.weight.shape() {
                    return Err(Error::shape(
                        "second layer",
                        s.weight.shape(),
                        target_second.weight.shape(),
                    ));
                }
            }
        }
        if self.classifier.layer.input_dim() != dc {
            return Err(Error::shape(
                "classifier input",
                self.classifier.layer.weight.shape(),
                &[dc],
            ));
        }
        let d = &self.discriminator;
        if d.hidden.input_dim() != dc
            || d.output.input_dim() != d.hidden.output_dim()
            || d.output.output_dim() != 2
        {
            return Err(Error::Config(format!(
                "discriminator shapes {:?} -> {:?} do not map {dc} -> 2",
                d.hidden.weight.shape(),
                d.output.weight.shape()
            )));
        }
        Ok(())
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.classifier.layer.input_dim()
    }

    pub fn classes(&self) -> usize {
        self.classifier.classes()
    }

    pub fn transformer(&self, domain: Domain) -> &TransformerParams {
        match domain {
            Domain::Source(k) => &self.sources[k],
            Domain::Target => &self.target,
        }
    }

    /// The second layer a domain actually uses.
    pub fn second_layer(&self, domain: Domain) -> &Dense {
        self.transformer(domain)
            .second
            .as_ref()
            .or(self.target.second.as_ref())
            .expect("target transformer owns a second layer")
    }

    pub fn is_tied(&self) -> bool {
        self.sources.iter().any(|s| s.second.is_none())
    }

    /// Number of distinct second-layer blocks.
    pub fn second_layer_count(&self) -> usize {
        self.sources
            .iter()
            .chain([&self.target])
            .filter(|t| t.second.is_some())
            .count()
    }

    /// Drops every source's own second layer so all domains share the
    /// target's.
    pub fn tie_second_layers(mut self) -> Self {
        for s in &mut self.sources {
            s.second = None;
        }
        self
    }

    /// Transformer and classifier tensors in canonical order: per transformer
    /// (sources, then target) first weight, first bias, then second weight and
    /// bias when owned; classifier weight and bias last.
    pub fn fg_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for t in self.sources.iter().chain([&self.target]) {
            out.extend([&t.first.weight, &t.first.bias]);
            if let Some(s) = &t.second {
                out.extend([&s.weight, &s.bias]);
            }
        }
        out.extend([&self.classifier.layer.weight, &self.classifier.layer.bias]);
        out
    }

    pub fn fg_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for t in self.sources.iter_mut().chain([&mut self.target]) {
            out.push(&mut t.first.weight);
            out.push(&mut t.first.bias);
            if let Some(s) = &mut t.second {
                out.push(&mut s.weight);
                out.push(&mut s.bias);
            }
        }
        out.push(&mut self.classifier.layer.weight);
        out.push(&mut self.classifier.layer.bias);
        out
    }

    pub fn d_tensors(&self) -> Vec<&Tensor> {
        let d = &self.discriminator;
        vec![&d.hidden.weight, &d.hidden.bias, &d.output.weight, &d.output.bias]
    }

    pub fn d_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let d = &mut self.discriminator;
        vec![
            &mut d.hidden.weight,
            &mut d.hidden.bias,
            &mut d.output.weight,
            &mut d.output.bias,
        ]
    }

    /// Copy with the transformer/classifier tensors replaced, in
    /// [`fg_tensors`](Self::fg_tensors) order.
    pub fn with_fg_tensors(&self, tensors: &[Tensor]) -> Result<Self> {
        let mut out = self.clone();
        replace_all(out.fg_tensors_mut(), tensors)?;
        Ok(out)
    }

    pub fn with_d_tensors(&self, tensors: &[Tensor]) -> Result<Self> {
        let mut out = self.clone();
        replace_all(out.d_tensors_mut(), tensors)?;
        Ok(out)
    }
}

fn replace_all(slots: Vec<&mut Tensor>, tensors: &[Tensor]) -> Result<()> {
    if slots.len() != tensors.len() {
        return Err(Error::Validation(format!(
            "expected {} tensors, got {}",
            slots.len(),
            tensors.len()
        )));
    }
    for (slot, t) in slots.into_iter().zip(tensors) {
        if slot.shape() != t.shape() {
            return Err(Error::shape("parameter replacement", slot.shape(), t.shape()));
        }
        *slot = t.clone();
    }
    Ok(())
}

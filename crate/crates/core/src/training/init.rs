use rand::Rng;

use crate::data::{seeded_rng, MultiSourceTask};
use crate::error::{Error, Result};
use crate::model::{
    ClassifierParams, CwanParams, Dense, DiscriminatorParams, LgNorm, TransformerParams,
};
use crate::numerics::Tensor;
use crate::training::TrainConfig;

const INIT_STREAM: u64 = 0x1A17;

/// Input dimensions and class count a model is built for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskShape {
    pub source_dims: Vec<usize>,
    pub target_dim: usize,
    pub classes: usize,
}

impl TaskShape {
    pub fn of(task: &MultiSourceTask) -> Self {
        TaskShape {
            source_dims: task.source_dims(),
            target_dim: task.target_dim(),
            classes: task.classes(),
        }
    }
}

fn dense(rng: &mut impl Rng, input: usize, output: usize) -> Dense {
    let bound = 1.0 / (input as f64).sqrt();
    let w = (0..input * output)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Dense {
        weight: Tensor::from_raw(vec![input, output], w),
        bias: Tensor::zeros(&[output]),
    }
}

/// Weights uniform in `±1/√fan_in`, biases zero, drawn in a fixed order from
/// one stream of `config.seed`: target transformer, classifier and
/// discriminator first, so they do not depend on the number of sources, then
/// each source transformer. With tied second layers the sources' own
/// second layers are still drawn (and discarded) so the remaining tensors
/// match the untied initialization.
pub fn init_params(shape: &TaskShape, config: &TrainConfig) -> Result<CwanParams> {
    if shape.classes < 2 {
        return Err(Error::Config(format!(
            "need at least 2 classes, got {}",
            shape.classes
        )));
    }
    if let Some(k) = shape.source_dims.iter().position(|&d| d == 0) {
        return Err(Error::Config(format!("source {} has dimension 0", k + 1)));
    }
    if shape.target_dim == 0 || config.hidden == 0 || config.d_c == 0 {
        return Err(Error::Config("dimensions must be positive".into()));
    }
    let mut rng = seeded_rng(config.seed, INIT_STREAM);
    let transformer = |rng: &mut _, input| TransformerParams {
        first: dense(rng, input, config.hidden),
        second: Some(dense(rng, config.hidden, config.d_c)),
    };
    let target = transformer(&mut rng, shape.target_dim);
    let classifier = ClassifierParams {
        layer: dense(&mut rng, config.d_c, shape.classes),
    };
    let discriminator = DiscriminatorParams {
        hidden: dense(&mut rng, config.d_c, config.d_c),
        output: dense(&mut rng, config.d_c, 2),
    };
    let sources: Vec<_> = shape
        .source_dims
        .iter()
        .map(|&d| transformer(&mut rng, d))
        .collect();
    let params = CwanParams {
        sources,
        target,
        classifier,
        discriminator,
    };
    Ok(if config.lg_norm == LgNorm::Tied {
        params.tie_second_layers()
    } else {
        params
    })
}

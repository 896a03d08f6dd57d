use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for an ordered group of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    shapes: Vec<Vec<usize>>,
}

impl AdamState {
    pub fn new<'a>(
        config: AdamConfig,
        params: impl IntoIterator<Item = &'a Tensor>,
    ) -> Result<Self> {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = config;
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !(learning_rate > 0.0 && in_unit(beta1) && in_unit(beta2) && epsilon > 0.0) {
            return Err(Error::Config(format!("invalid Adam settings {config:?}")));
        }
        let shapes: Vec<Vec<usize>> = params.into_iter().map(|p| p.shape().to_vec()).collect();
        let zeros = |s: &Vec<usize>| vec![0.0; s.iter().product()];
        Ok(AdamState {
            config,
            step: 0,
            first: shapes.iter().map(zeros).collect(),
            second: shapes.iter().map(zeros).collect(),
            shapes,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// One bias-corrected Adam update applied in place.
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.shapes.len() || grads.len() != self.shapes.len() {
            return Err(Error::Validation(format!(
                "adam: expected {} tensors, got {} params and {} grads",
                self.shapes.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), s) in params.iter().zip(grads).zip(&self.shapes) {
            if p.shape() != s.as_slice() {
                return Err(Error::shape("adam param", s, p.shape()));
            }
            if g.shape() != s.as_slice() {
                return Err(Error::shape("adam grad", s, g.shape()));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for (((w, &gv), mv), vv) in p
                .values_mut()
                .iter_mut()
                .zip(g.values())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

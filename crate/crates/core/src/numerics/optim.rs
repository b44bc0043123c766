use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || {
            params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Gradients are validated before anything is mutated.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::ShapeMismatch {
                op: "optimizer_step",
                left: vec![params.len()],
                right: vec![grads.len()],
            });
        }
        for (id, g) in params.ids().zip(grads) {
            if g.shape() != params.get(id).shape() {
                return Err(Error::ShapeMismatch {
                    op: "optimizer_step",
                    left: params.get(id).shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(params.name(id).to_string()));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

//! Adam optimizer over flat parameter slices.

use serde::{Deserialize, Serialize};

use super::{MlpParams, NeuralError};

/// Adam hyperparameters. The default epsilon is 1e-3 and sits outside the
/// square root in the update; both are configurable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-3,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(lr: f64) -> Self {
        Self {
            learning_rate: lr,
            ..Self::default()
        }
    }
}

/// First/second moment accumulators for a fixed set of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    /// `lens` lists the flat length of each tensor that will be updated.
    pub fn new(config: AdamConfig, lens: &[usize]) -> Self {
        Self {
            config,
            m: lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: lens.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn for_params(config: AdamConfig, params: &MlpParams) -> Self {
        let lens: Vec<usize> = params.flat().iter().map(|s| s.len()).collect();
        Self::new(config, &lens)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// One Adam update with bias correction. `params` and `grads` must list
    /// the same tensors, in the same order, as at construction.
    pub fn step(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
    ) -> Result<(), NeuralError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NeuralError::DimensionMismatch(
                "tensor count differs from optimizer state".into(),
            ));
        }
        self.t += 1;
        let c = self.config;
        let m_corr = 1.0 - c.beta1.powi(self.t as i32);
        let v_corr = 1.0 - c.beta2.powi(self.t as i32);
        for k in 0..params.len() {
            if params[k].len() != self.m[k].len() || grads[k].len() != self.m[k].len() {
                return Err(NeuralError::DimensionMismatch(format!(
                    "tensor {k} length differs from optimizer state"
                )));
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..params[k].len() {
                let g = grads[k][i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let m_hat = m[i] / m_corr;
                let v_hat = v[i] / v_corr;
                params[k][i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}

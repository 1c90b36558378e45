use std::collections::{BTreeMap, HashMap};

use candle_core::backprop::GradStore;
use candle_core::{DType, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::TrainingError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction; moment tensors are keyed by parameter name so
/// the state can be checkpointed.
#[derive(Debug)]
pub struct Adam {
    config: AdamConfig,
    t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

/// Euclidean norm over all gradients present in `grads`.
pub fn global_grad_norm<'a>(
    params: impl IntoIterator<Item = (&'a str, &'a Var)>,
    grads: &GradStore,
) -> Result<f64, TrainingError> {
    let mut sq = 0.0;
    for (_, var) in params {
        if let Some(g) = grads.get(var.as_tensor()) {
            sq += g
                .sqr()?
                .sum_all()?
                .to_dtype(DType::F64)?
                .to_scalar::<f64>()?;
        }
    }
    Ok(sq.sqrt())
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update of every parameter that received a gradient. With
    /// `clip = Some(c)`, gradients are rescaled to global norm at most `c`.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = (&'a str, &'a Var)> + Clone,
        grads: &GradStore,
        clip: Option<f64>,
    ) -> Result<StepInfo, TrainingError> {
        let grad_norm = global_grad_norm(params.clone(), grads)?;
        if !grad_norm.is_finite() {
            return Err(TrainingError::NonFiniteGradient);
        }
        let scale = match clip {
            Some(c) if grad_norm > c => c / grad_norm,
            _ => 1.0,
        };
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (name, var) in params {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let g = if scale < 1.0 { (g * scale)? } else { g.clone() };
            let m = match self.m.get(name) {
                Some(m) => ((m * beta1)? + (&g * (1.0 - beta1))?)?,
                None => (&g * (1.0 - beta1))?,
            };
            let v = match self.v.get(name) {
                Some(v) => ((v * beta2)? + (g.sqr()? * (1.0 - beta2))?)?,
                None => (g.sqr()? * (1.0 - beta2))?,
            };
            let update = ((&m / bc1)? / ((&v / bc2)?.sqrt()? + epsilon)?)?;
            let next = (var.as_tensor().detach() - (update * lr)?)?;
            var.set(&next)?;
            self.m.insert(name.to_string(), m.detach());
            self.v.insert(name.to_string(), v.detach());
        }
        Ok(StepInfo {
            grad_norm,
            clipped: scale < 1.0,
        })
    }

    /// Moment tensors as `m.<param>` / `v.<param>`.
    pub fn state_tensors(&self) -> HashMap<String, Tensor> {
        let m = self.m.iter().map(|(k, t)| (format!("m.{k}"), t.clone()));
        let v = self.v.iter().map(|(k, t)| (format!("v.{k}"), t.clone()));
        m.chain(v).collect()
    }

    pub fn from_state(
        config: AdamConfig,
        t: u64,
        tensors: &HashMap<String, Tensor>,
        dtype: DType,
    ) -> Result<Self, TrainingError> {
        let mut adam = Self::new(config);
        adam.t = t;
        for (key, tensor) in tensors {
            let tensor = tensor.to_dtype(dtype)?;
            match key.split_once('.') {
                Some(("m", name)) => adam.m.insert(name.to_string(), tensor),
                Some(("v", name)) => adam.v.insert(name.to_string(), tensor),
                _ => {
                    return Err(TrainingError::Checkpoint(format!(
                        "unexpected optimizer tensor {key}"
                    )))
                }
            };
        }
        if adam.m.len() != adam.v.len() {
            return Err(TrainingError::Checkpoint(
                "optimizer moments are incomplete".into(),
            ));
        }
        Ok(adam)
    }
}

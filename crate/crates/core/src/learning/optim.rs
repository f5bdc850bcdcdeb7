use std::collections::BTreeMap;

use super::LearningError;
use crate::agents::{ParamTree, TrainableSet};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    first: Vec<f32>,
    second: Vec<f32>,
}

/// Adam state for one agent, keyed by parameter name so it survives
/// re-pairing with different partners.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: AdamConfig,
    steps: u64,
    moments: BTreeMap<String, Moments>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            steps: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Shape of the accumulators held for `name`, if any.
    pub fn moment_len(&self, name: &str) -> Option<usize> {
        self.moments.get(name).map(|m| m.first.len())
    }

    /// Applies one Adam step to every parameter of `params` that has a
    /// gradient in `grads` and belongs to `filter`. Returns the names updated.
    ///
    /// A gradient for a name outside `filter` or absent from `params` is an
    /// error, and nothing is modified in that case.
    pub fn apply<P: ParamTree>(
        &mut self,
        params: &mut P,
        grads: &[(String, Tensor)],
        filter: TrainableSet,
    ) -> Result<Vec<String>, LearningError> {
        let mut by_name: BTreeMap<&str, &Tensor> = BTreeMap::new();
        for (name, g) in grads {
            if !filter.includes(name) {
                return Err(LearningError::FilterMismatch(format!(
                    "gradient for `{name}` is outside the {filter:?} parameter set"
                )));
            }
            by_name.insert(name, g);
        }
        let mut known = 0;
        params.visit("", &mut |name, value| {
            if let Some(g) = by_name.get(name.as_str()) {
                if g.shape() == value.shape() {
                    known += 1;
                }
            }
        });
        if known != by_name.len() {
            return Err(LearningError::FilterMismatch(
                "gradients do not match the agent's parameters".into(),
            ));
        }

        self.steps += 1;
        let t = self.steps as i32;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let correction1 = (1.0 - f64::from(beta1).powi(t)) as f32;
        let correction2 = (1.0 - f64::from(beta2).powi(t)) as f32;
        let mut updated = Vec::with_capacity(by_name.len());
        let moments = &mut self.moments;
        params.visit_mut("", &mut |name, value| {
            let Some(g) = by_name.get(name.as_str()) else {
                return;
            };
            let m = moments.entry(name.clone()).or_insert_with(|| Moments {
                first: vec![0.0; value.len()],
                second: vec![0.0; value.len()],
            });
            let data = value.data_mut();
            for (((p, &g), m1), m2) in data
                .iter_mut()
                .zip(g.data())
                .zip(m.first.iter_mut())
                .zip(m.second.iter_mut())
            {
                *m1 = beta1 * *m1 + (1.0 - beta1) * g;
                *m2 = beta2 * *m2 + (1.0 - beta2) * g * g;
                let m_hat = *m1 / correction1;
                let v_hat = *m2 / correction2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
            updated.push(name);
        });
        Ok(updated)
    }
}

impl Default for OptimizerState {
    fn default() -> Self {
        Self::new(AdamConfig::default())
    }
}

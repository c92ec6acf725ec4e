use std::collections::HashMap;

use super::graph::Gradients;
use super::params::{ParamId, ParamStore};
use super::NnError;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `param` in place.
    pub fn update(&mut self, param: &mut [f64], grad: &[f64], lr: f64) -> Result<(), NnError> {
        if param.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(NnError::Shape(format!(
                "adam state holds {} values, got param {} / grad {}",
                self.m.len(),
                param.len(),
                grad.len()
            )));
        }
        if !(lr > 0.0) {
            return Err(NnError::Invalid(format!("learning rate must be positive, got {lr}")));
        }
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        for i in 0..param.len() {
            let g = grad[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            param[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }
}

/// Adam over every trainable entry of a [`ParamStore`]. Parameters that got
/// no gradient in a step are treated as having a zero gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    states: HashMap<ParamId, AdamState>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            states: HashMap::new(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<(), NnError> {
        let got: HashMap<ParamId, &[f64]> = grads.params().map(|(id, g)| (id, g.data())).collect();
        let ids: Vec<ParamId> = store.ids().filter(|&id| store.is_trainable(id)).collect();
        for id in ids {
            let value = store.value_mut(id);
            let state = self.states.entry(id).or_insert_with(|| AdamState::new(value.len()));
            match got.get(&id) {
                Some(g) => state.update(value.data_mut(), g, self.lr)?,
                None => {
                    let zeros = vec![0.0; value.len()];
                    state.update(value.data_mut(), &zeros, self.lr)?
                }
            }
        }
        Ok(())
    }
}

//! Adadelta: per-parameter step sizes from decaying averages of squared
//! gradients and squared updates. No global learning rate.

use std::collections::BTreeMap;

use crate::embeddings::EmbeddingTable;
use crate::nn::ModelParams;
use crate::training::Gradients;
use crate::{Error, Result};

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Running averages for one parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulators {
    pub sq_grad: Vec<f64>,
    pub sq_delta: Vec<f64>,
}

impl Accumulators {
    pub fn zeros(len: usize) -> Self {
        Accumulators {
            sq_grad: vec![0.0; len],
            sq_delta: vec![0.0; len],
        }
    }

    /// Apply one update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], rho: f64, eps: f64) {
        for i in 0..params.len() {
            let g = grads[i];
            self.sq_grad[i] = rho * self.sq_grad[i] + (1.0 - rho) * g * g;
            let delta = -((self.sq_delta[i] + eps).sqrt() / (self.sq_grad[i] + eps).sqrt()) * g;
            self.sq_delta[i] = rho * self.sq_delta[i] + (1.0 - rho) * delta * delta;
            params[i] += delta;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    rho: f64,
    eps: f64,
    arrays: Vec<Accumulators>,
    embeddings: BTreeMap<String, Accumulators>,
}

impl AdadeltaState {
    pub fn new(model: &ModelParams, rho: f64, eps: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Config(format!("Adadelta rho must be in (0, 1), got {rho}")));
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::Config(format!("Adadelta epsilon must be positive, got {eps}")));
        }
        Ok(AdadeltaState {
            rho,
            eps,
            arrays: model
                .arrays()
                .iter()
                .map(|(_, a)| Accumulators::zeros(a.len()))
                .collect(),
            embeddings: BTreeMap::new(),
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    pub fn arrays(&self) -> &[Accumulators] {
        &self.arrays
    }

    /// Update the model in place. Non-finite gradients are rejected before
    /// anything is modified.
    pub fn step(&mut self, model: &mut ModelParams, grads: &Gradients) -> Result<()> {
        if grads.arrays.len() != self.arrays.len() {
            return Err(Error::Shape("gradient arrays do not match the optimizer state".into()));
        }
        if !grads.all_finite() {
            return Err(Error::NonFinite("gradient; aborting epoch".into()));
        }
        let (rho, eps) = (self.rho, self.eps);
        for ((params, g), acc) in model.arrays_mut().into_iter().zip(&grads.arrays).zip(&mut self.arrays) {
            if params.len() != g.len() {
                return Err(Error::Shape("gradient array length mismatch".into()));
            }
            acc.step(params, g, rho, eps);
        }
        Ok(())
    }

    /// Update the embedding rows that received gradients. Tokens not yet in
    /// the table are inserted with their current lookup vector first.
    pub fn step_embeddings(&mut self, table: &mut EmbeddingTable, grads: &Gradients) -> Result<()> {
        let (rho, eps) = (self.rho, self.eps);
        for (token, g) in &grads.embeddings {
            if !table.contains(token) {
                let v = table.lookup(token);
                table.insert(token, &v)?;
            }
            let row = table.get_mut(token).expect("row inserted above");
            let acc = self
                .embeddings
                .entry(token.clone())
                .or_insert_with(|| Accumulators::zeros(g.len()));
            acc.step(row, g, rho, eps);
        }
        Ok(())
    }
}

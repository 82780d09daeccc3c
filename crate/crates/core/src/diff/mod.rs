//! Gradients of the MAP objective with respect to a model's parameters.
//!
//! Network parts are differentiated by hand-written backpropagation, the
//! mechanistic part with forward-mode [`dual::Dual`] numbers. Both accumulate
//! into one flat vector aligned with the model's [`ParameterSet`].
//!
//! [`ParameterSet`]: crate::models::ParameterSet

pub mod dual;

use thiserror::Error;

use crate::data::Observation;
use crate::models::{GradSink, ModelError, ModelSpec, ParameterSet};
use crate::optim::{LossSpec, PriorMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("observation {index}: {source}")]
    Forward { index: usize, source: ModelError },
    #[error("non-finite gradient at observation {index}")]
    NonFinite { index: usize },
}

/// Gradient aligned index-for-index with a [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub values: Vec<f64>,
}

impl GradientVector {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|g| g.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Whether parameter `i` carries a prior term under `mode`.
pub fn prior_enabled(params: &ParameterSet, mode: PriorMode, i: usize) -> bool {
    match mode {
        PriorMode::Full => true,
        PriorMode::PhysicalOnly => params.is_physical()[i],
        PriorMode::None => false,
    }
}

/// Adds `weight * sum (y - yhat)^2` over `batch` and its gradient to `grad`;
/// returns the weighted sum.
pub fn accumulate_data_term(
    m: &ModelSpec,
    batch: &[&Observation],
    weight: f64,
    grad: &mut [f64],
) -> Result<f64, DiffError> {
    let mut total = 0.0;
    for (index, obs) in batch.iter().enumerate() {
        let seed = |y_hat: f64| -2.0 * weight * (obs.y - y_hat);
        let y_hat = m
            .evaluate(obs, Some(GradSink { grad, seed: &seed }))
            .map_err(|source| DiffError::Forward { index, source })?;
        let r = obs.y - y_hat;
        total += weight * r * r;
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(DiffError::NonFinite {
            index: first_non_finite(m, batch),
        });
    }
    Ok(total)
}

fn first_non_finite(m: &ModelSpec, batch: &[&Observation]) -> usize {
    let mut g = vec![0.0; m.n_params()];
    for (index, obs) in batch.iter().enumerate() {
        g.iter_mut().for_each(|v| *v = 0.0);
        let seed = |y_hat: f64| y_hat - obs.y;
        if m.evaluate(obs, Some(GradSink { grad: &mut g, seed: &seed })).is_err() || !g.iter().all(|v| v.is_finite()) {
            return index;
        }
    }
    batch.len().saturating_sub(1)
}

/// Adds `weight * sum (theta - mu)^2 / sigma^2` over the enabled priors and
/// its gradient to `grad`; returns the weighted sum.
pub fn accumulate_prior_term(params: &ParameterSet, mode: PriorMode, weight: f64, grad: &mut [f64]) -> f64 {
    let mut total = 0.0;
    let (mu, sd) = (params.prior_mean(), params.prior_std());
    for (i, v) in params.values.iter().enumerate() {
        if !prior_enabled(params, mode, i) {
            continue;
        }
        let z = (v - mu[i]) / sd[i];
        total += weight * z * z;
        grad[i] += 2.0 * weight * z / sd[i];
    }
    total
}

/// Gradient of the MAP objective
/// `sum (y - yhat)^2 / noise_std^2 + sum (theta - mu)^2 / sigma^2`
/// restricted to `batch` and the priors enabled in `loss`.
pub fn loss_gradient(m: &ModelSpec, batch: &[Observation], loss: &LossSpec) -> Result<GradientVector, DiffError> {
    if batch.is_empty() {
        return Err(DiffError::EmptyBatch);
    }
    let mut g = GradientVector::zeros(m.n_params());
    let refs: Vec<&Observation> = batch.iter().collect();
    let w = 1.0 / (loss.noise_std * loss.noise_std);
    accumulate_data_term(m, &refs, w, &mut g.values)?;
    accumulate_prior_term(&m.params, loss.prior_mode, 1.0, &mut g.values);
    Ok(g)
}

use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Static description of every parameter: name, Gaussian prior, whether it
/// belongs to the mechanistic sub-model, and optional hard bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMeta {
    pub names: Vec<String>,
    pub prior_mean: Vec<f64>,
    pub prior_std: Vec<f64>,
    pub is_physical: Vec<bool>,
    pub bounds: Vec<Option<(f64, f64)>>,
}

/// Flat parameter vector with its priors.
///
/// The metadata is shared between clones; only `values` is copied when a
/// model is snapshotted during training.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub values: Vec<f64>,
    meta: Arc<ParamMeta>,
}

#[derive(Debug, Default)]
pub(crate) struct ParamBuilder {
    values: Vec<f64>,
    meta: ParamMeta,
}

impl Default for ParamMeta {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            prior_mean: Vec::new(),
            prior_std: Vec::new(),
            is_physical: Vec::new(),
            bounds: Vec::new(),
        }
    }
}

impl ParamBuilder {
    pub(crate) fn push(
        &mut self,
        name: String,
        value: f64,
        prior: (f64, f64),
        physical: bool,
        bounds: Option<(f64, f64)>,
    ) {
        self.values.push(value);
        self.meta.names.push(name);
        self.meta.prior_mean.push(prior.0);
        self.meta.prior_std.push(prior.1);
        self.meta.is_physical.push(physical);
        self.meta.bounds.push(bounds);
    }

    pub(crate) fn len(&self) -> usize {
        self.values.len()
    }

    pub(crate) fn build(self) -> ParameterSet {
        ParameterSet {
            values: self.values,
            meta: Arc::new(self.meta),
        }
    }
}

impl ParameterSet {
    pub fn from_parts(values: Vec<f64>, meta: ParamMeta) -> Result<Self, String> {
        let n = values.len();
        if meta.names.len() != n
            || meta.prior_mean.len() != n
            || meta.prior_std.len() != n
            || meta.is_physical.len() != n
            || meta.bounds.len() != n
        {
            return Err("parameter vectors differ in length".into());
        }
        if let Some(i) = meta.prior_std.iter().position(|s| !(*s > 0.0)) {
            return Err(format!("prior std of `{}` must be positive", meta.names[i]));
        }
        Ok(Self {
            values,
            meta: Arc::new(meta),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn meta(&self) -> &ParamMeta {
        &self.meta
    }

    pub fn names(&self) -> &[String] {
        &self.meta.names
    }

    pub fn prior_mean(&self) -> &[f64] {
        &self.meta.prior_mean
    }

    pub fn prior_std(&self) -> &[f64] {
        &self.meta.prior_std
    }

    pub fn is_physical(&self) -> &[bool] {
        &self.meta.is_physical
    }

    pub fn bounds(&self) -> &[Option<(f64, f64)>] {
        &self.meta.bounds
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.meta.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.values[i])
    }

    /// Replaces the prior std of every parameter (used to pin a model to its
    /// prior mean).
    pub fn set_all_prior_std(&mut self, std: f64) {
        let meta = Arc::make_mut(&mut self.meta);
        meta.prior_std.iter_mut().for_each(|s| *s = std);
    }

    /// Overrides the prior of one parameter.
    pub fn set_prior(&mut self, index: usize, mean: f64, std: f64) {
        let meta = Arc::make_mut(&mut self.meta);
        meta.prior_mean[index] = mean;
        meta.prior_std[index] = std;
    }

    /// Clips bounded parameters into their hard bounds.
    pub fn clip_to_bounds(&mut self) {
        for (v, b) in self.values.iter_mut().zip(self.meta.bounds.iter()) {
            if let Some((lo, hi)) = b {
                *v = v.clamp(*lo, *hi);
            }
        }
    }

    /// Mutable values alongside the (shared) metadata.
    pub fn split_mut(&mut self) -> (&mut [f64], &ParamMeta) {
        (&mut self.values, &self.meta)
    }

    pub fn count_physical(&self) -> usize {
        self.meta.is_physical.iter().filter(|p| **p).count()
    }
}

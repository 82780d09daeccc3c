//! MAP objective, first-order optimizers, learning-rate schedules, early
//! stopping and grid search.

mod fit;
mod grid;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Observation;
use crate::diff::{accumulate_data_term, accumulate_prior_term, DiffError};
use crate::models::ModelSpec;

pub(crate) use fit::descend;
pub use fit::{fit_map, objective_gradient, CurvePoint, FitOutcome, NormalizedObjective};
pub use grid::{grid_search, Candidate, Grid, GridOutcome, GridRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error(transparent)]
    Gradient(#[from] DiffError),
    #[error("non-finite gradient; parameters left unchanged")]
    NonFiniteGradient,
    #[error("gradient has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty training data")]
    EmptyData,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("every grid candidate failed: {0}")]
    AllDiverged(String),
}

/// Which parameters carry their Gaussian prior in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    Full,
    PhysicalOnly,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    /// Measurement noise std `sigma_eps`, in target units.
    pub noise_std: f64,
    pub prior_mode: PriorMode,
}

impl LossSpec {
    /// `sigma_eps = factor * mean(y)` over `data`.
    pub fn relative<'a, I>(data: I, factor: f64, prior_mode: PriorMode) -> Result<Self, OptimError>
    where
        I: IntoIterator<Item = &'a Observation>,
    {
        let (mut sum, mut n) = (0.0, 0usize);
        for o in data {
            sum += o.y;
            n += 1;
        }
        if n == 0 {
            return Err(OptimError::EmptyData);
        }
        let noise_std = factor * sum / n as f64;
        let spec = Self { noise_std, prior_mode };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.noise_std > 0.0) || !self.noise_std.is_finite() {
            return Err(OptimError::InvalidConfig(format!(
                "noise std must be positive, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// `sum (y - yhat)^2 / noise_std^2 + sum (theta - mu)^2 / sigma^2` over the
/// priors enabled in `loss`.
pub fn map_loss(m: &ModelSpec, data: &[Observation], loss: &LossSpec) -> Result<f64, OptimError> {
    if data.is_empty() {
        return Err(OptimError::EmptyData);
    }
    loss.validate()?;
    let refs: Vec<&Observation> = data.iter().collect();
    // gradient buffer is discarded; the accumulators return the loss terms
    let mut scratch = vec![0.0; m.n_params()];
    let w = 1.0 / (loss.noise_std * loss.noise_std);
    let data_term = accumulate_data_term(m, &refs, w, &mut scratch)?;
    let prior_term = accumulate_prior_term(&m.params, loss.prior_mode, 1.0, &mut scratch);
    Ok(data_term + prior_term)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "sgd", alias = "SGD")]
    Sgd,
    #[serde(rename = "adam", alias = "Adam")]
    Adam,
}

/// Learning-rate schedule `gamma_k = gamma0 / k^a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    PowerDecay(f64),
}

impl Schedule {
    pub fn rate(&self, gamma0: f64, k: u64) -> f64 {
        match *self {
            Schedule::Constant => gamma0,
            Schedule::PowerDecay(a) => gamma0 / (k.max(1) as f64).powf(a),
        }
    }
}

/// Mini-batch size; `All` uses the whole training set per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BatchRepr", into = "BatchRepr")]
pub enum BatchSize {
    All,
    Size(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BatchRepr {
    Name(String),
    Size(usize),
}

impl TryFrom<BatchRepr> for BatchSize {
    type Error = String;
    fn try_from(r: BatchRepr) -> Result<Self, String> {
        match r {
            BatchRepr::Name(s) if s.eq_ignore_ascii_case("all") => Ok(BatchSize::All),
            BatchRepr::Name(s) => Err(format!("batch size must be an integer or \"all\", got `{s}`")),
            BatchRepr::Size(0) => Err("batch size must be at least 1".into()),
            BatchRepr::Size(n) => Ok(BatchSize::Size(n)),
        }
    }
}

impl From<BatchSize> for BatchRepr {
    fn from(b: BatchSize) -> Self {
        match b {
            BatchSize::All => BatchRepr::Name("all".into()),
            BatchSize::Size(n) => BatchRepr::Size(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub method: Method,
    pub gamma0: f64,
    pub schedule: Schedule,
    /// Steps per update in online learning; fixed epoch count for batch fits
    /// without early stopping.
    pub steps: usize,
    pub batch_size: BatchSize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Adam,
            gamma0: 1e-3,
            schedule: Schedule::Constant,
            steps: 1,
            batch_size: BatchSize::Size(32),
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.gamma0 > 0.0) || !self.gamma0.is_finite() {
            return Err(OptimError::InvalidConfig(format!("gamma0 must be positive, got {}", self.gamma0)));
        }
        if self.steps < 1 {
            return Err(OptimError::InvalidConfig("steps must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(OptimError::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(OptimError::InvalidConfig("Adam epsilon must be positive".into()));
        }
        if let Schedule::PowerDecay(a) = self.schedule {
            if !(a >= 0.0) {
                return Err(OptimError::InvalidConfig("decay exponent must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarlyStoppingConfig {
    pub val_fraction: f64,
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for EarlyStoppingConfig {
    fn default() -> Self {
        Self {
            val_fraction: 0.2,
            patience: 10,
            max_epochs: 200,
        }
    }
}

impl EarlyStoppingConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(OptimError::InvalidConfig("val_fraction must lie in (0, 1)".into()));
        }
        if self.patience < 1 || self.max_epochs < 1 {
            return Err(OptimError::InvalidConfig("patience and max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Optimizer memory: Adam moments and the number of steps taken.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub k: u64,
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            k: 0,
        }
    }
}

/// One descent step `values <- values - gamma_k * direction(grad)`.
///
/// SGD uses the raw gradient, Adam the bias-corrected moment ratio. `k` is the
/// 1-based iteration index used by the schedule and the bias correction.
pub fn optimizer_step(
    values: &mut [f64],
    state: &mut OptimizerState,
    grad: &[f64],
    cfg: &OptimizerConfig,
    k: u64,
) -> Result<(), OptimError> {
    if grad.len() != values.len() {
        return Err(OptimError::LengthMismatch {
            expected: values.len(),
            got: grad.len(),
        });
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(OptimError::NonFiniteGradient);
    }
    let k = k.max(1);
    let gamma = cfg.schedule.rate(cfg.gamma0, k);
    match cfg.method {
        Method::Sgd => {
            for (v, g) in values.iter_mut().zip(grad) {
                *v -= gamma * g;
            }
        }
        Method::Adam => {
            if state.m.len() != values.len() {
                *state = OptimizerState {
                    k: state.k,
                    ..OptimizerState::new(values.len())
                };
            }
            let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
            let c1 = 1.0 - b1.powf(k as f64);
            let c2 = 1.0 - b2.powf(k as f64);
            for i in 0..values.len() {
                let g = grad[i];
                state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
                state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
                let m_hat = state.m[i] / c1;
                let v_hat = state.v[i] / c2;
                values[i] -= gamma * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        }
    }
    state.k = k;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Source;
    use crate::models::{init_model, ModelConfig, ModelKind};

    fn obs(x0: f64, y: f64) -> Observation {
        Observation {
            t: 0,
            x: [x0, 1.0, 1.0, 1.0, 0.0, 0.0],
            y,
            source: Source::Mpfm,
            well_id: 1,
        }
    }

    #[test]
    fn map_loss_examples() {
        let mut m = init_model(&ModelConfig::new(ModelKind::Lr, 0));
        let full = LossSpec {
            noise_std: 1.0,
            prior_mode: PriorMode::Full,
        };
        assert_eq!(map_loss(&m, &[obs(0.3, 0.0)], &full).unwrap(), 0.0);
        m.params.values[6] = 2.0;
        let none = LossSpec {
            noise_std: 1.0,
            prior_mode: PriorMode::None,
        };
        assert_eq!(map_loss(&m, &[obs(0.3, 0.0)], &none).unwrap(), 4.0);
        // prior of b: (2 - 0)^2 / 1^2
        assert_eq!(map_loss(&m, &[obs(0.3, 2.0)], &full).unwrap(), 4.0);
        assert!(map_loss(&m, &[], &full).is_err());
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for method in [Method::Sgd, Method::Adam] {
            let cfg = OptimizerConfig {
                method,
                ..OptimizerConfig::default()
            };
            let mut v = vec![1.0, -2.0];
            let mut st = OptimizerState::new(2);
            optimizer_step(&mut v, &mut st, &[0.0, 0.0], &cfg, 1).unwrap();
            assert_eq!(v, vec![1.0, -2.0]);
        }
    }

    #[test]
    fn power_decay_rate() {
        assert_eq!(Schedule::PowerDecay(1.0).rate(0.1, 10), 0.01);
        assert_eq!(Schedule::Constant.rate(0.1, 10), 0.1);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let cfg = OptimizerConfig::default();
        let mut v = vec![1.0];
        let mut st = OptimizerState::new(1);
        assert_eq!(
            optimizer_step(&mut v, &mut st, &[f64::NAN], &cfg, 1),
            Err(OptimError::NonFiniteGradient)
        );
        assert_eq!(v, vec![1.0]);
        assert_eq!(st, OptimizerState::new(1));
    }

    #[test]
    fn batch_size_serde() {
        #[derive(Serialize, Deserialize)]
        struct W {
            b: BatchSize,
        }
        let w: W = toml::from_str("b = \"all\"").unwrap();
        assert_eq!(w.b, BatchSize::All);
        let w: W = toml::from_str("b = 16").unwrap();
        assert_eq!(w.b, BatchSize::Size(16));
        assert!(toml::from_str::<W>("b = 0").is_err());
        assert_eq!(toml::to_string(&W { b: BatchSize::All }).unwrap().trim(), "b = \"all\"");
    }
}

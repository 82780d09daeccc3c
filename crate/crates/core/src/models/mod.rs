//! The predictor zoo: benchmark, linear regression, feed-forward network,
//! multi-task residual network, mechanistic choke model, hybrid error model
//! and hybrid area model.
//!
//! Data-driven parts see standardized inputs (the model's [`FeatureScaler`])
//! and produce outputs in units of the model's [`TargetScale`]; mechanistic
//! terms see raw physical inputs.

pub mod checkpoint;
pub mod mechanistic;
pub mod mtl;
pub mod network;
pub mod params;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{feature, FeatureScaler, Observation, TargetScale, N_FEATURES};
use crate::diff::dual::Dual;
use crate::rng;
pub use mechanistic::{
    effective_area, mechanistic_flow, ChokeGeometry, MechanisticParams, PhysicalPriors, PHYSICAL_BOUNDS,
    PHYSICAL_NAMES,
};
pub use mtl::MtlShape;
use mtl::{Mtl, MtlTrace};
use network::{mlp_param_count, push_he_params, Mlp, MlpTrace};
pub use params::{ParamMeta, ParameterSet};
use params::ParamBuilder;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-positive pressure (p1 = {p1}, p2 = {p2})")]
    NonPositivePressure { p1: f64, p2: f64 },
    #[error("choke opening {0} outside [0, 1]")]
    ChokeOutOfRange(f64),
    #[error("well id {well} outside 1..={n_wells}")]
    WellOutOfRange { well: u32, n_wells: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("the benchmark predictor has no parametric forward pass")]
    NoForward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Benchmark,
    Lr,
    Nn,
    Mtl,
    Mm,
    Hem,
    Ham,
}

impl ModelKind {
    /// The six trainable kinds, in table order.
    pub const TRAINABLE: [ModelKind; 6] = [
        ModelKind::Lr,
        ModelKind::Nn,
        ModelKind::Mtl,
        ModelKind::Hem,
        ModelKind::Ham,
        ModelKind::Mm,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Benchmark => "Benchmark",
            ModelKind::Lr => "LR",
            ModelKind::Nn => "NN",
            ModelKind::Mtl => "MTL",
            ModelKind::Mm => "MM",
            ModelKind::Hem => "HEM",
            ModelKind::Ham => "HAM",
        }
    }

    pub fn has_physics(&self) -> bool {
        matches!(self, ModelKind::Mm | ModelKind::Hem | ModelKind::Ham)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benchmark" => Ok(ModelKind::Benchmark),
            "lr" => Ok(ModelKind::Lr),
            "nn" => Ok(ModelKind::Nn),
            "mtl" => Ok(ModelKind::Mtl),
            "mm" | "m" => Ok(ModelKind::Mm),
            "hem" => Ok(ModelKind::Hem),
            "ham" => Ok(ModelKind::Ham),
            other => Err(format!("unknown model kind `{other}`")),
        }
    }
}

/// Hidden layer widths of a feed-forward network plus its in/out dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub layer_widths: Vec<usize>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl NetworkShape {
    pub fn new(layer_widths: Vec<usize>) -> Self {
        Self {
            layer_widths,
            input_dim: N_FEATURES,
            output_dim: 1,
        }
    }

    /// `[input, hidden..., output]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim];
        s.extend_from_slice(&self.layer_widths);
        s.push(self.output_dim);
        s
    }

    pub fn param_count(&self) -> usize {
        mlp_param_count(&self.sizes())
    }
}

/// Everything needed to (re-)initialize a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Hidden widths of the NN and of the hybrid correction/area networks.
    pub hidden: Vec<usize>,
    pub mtl: MtlShape,
    pub priors: PhysicalPriors,
    pub geometry: ChokeGeometry,
    /// Initial value of the hybrid-area multiplier `softplus(bias)`.
    pub ham_multiplier: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Nn,
            hidden: vec![32, 32],
            mtl: MtlShape::default(),
            priors: PhysicalPriors::default(),
            geometry: ChokeGeometry::default(),
            ham_multiplier: 0.84,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            ..Self::default()
        }
    }
}

/// A model instance: kind, parameters and input/output scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub params: ParameterSet,
    pub shape: Option<NetworkShape>,
    pub scaler: FeatureScaler,
    pub target: TargetScale,
    /// Incremented on every parameter update.
    pub version: u64,
    pub config: ModelConfig,
}

pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

fn softplus_inverse(y: f64) -> f64 {
    (y.exp() - 1.0).ln()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn push_physical(b: &mut ParamBuilder, priors: &PhysicalPriors, include_cd: bool) {
    let mean = priors.mean.to_array();
    let std = priors.std.to_array();
    let n = if include_cd { 6 } else { 5 };
    for i in 0..n {
        b.push(
            PHYSICAL_NAMES[i].to_string(),
            mean[i],
            (mean[i], std[i]),
            true,
            Some(PHYSICAL_BOUNDS[i]),
        );
    }
}

/// Creates a model from its configuration.
///
/// Network weights are He-initialized from the `init` sub-stream of the
/// config seed; physical parameters start at their prior means.
pub fn init_model(config: &ModelConfig) -> ModelSpec {
    let mut rng = rng::stream(config.seed, "init");
    let mut b = ParamBuilder::default();
    let mut shape = None;
    match config.kind {
        ModelKind::Benchmark => {}
        ModelKind::Lr => {
            for name in feature::NAMES {
                b.push(format!("lr.w[{name}]"), 0.0, (0.0, 1.0), false, None);
            }
            b.push("lr.b".into(), 0.0, (0.0, 1.0), false, None);
        }
        ModelKind::Nn => {
            let s = NetworkShape::new(config.hidden.clone());
            push_he_params(&mut b, "nn", &s.sizes(), 0.0, &mut rng);
            shape = Some(s);
        }
        ModelKind::Mtl => {
            mtl::push_mtl_params(&mut b, &config.mtl, N_FEATURES, &mut rng);
        }
        ModelKind::Mm => push_physical(&mut b, &config.priors, true),
        ModelKind::Hem => {
            push_physical(&mut b, &config.priors, true);
            let s = NetworkShape::new(config.hidden.clone());
            push_he_params(&mut b, "corr", &s.sizes(), 0.0, &mut rng);
            shape = Some(s);
        }
        ModelKind::Ham => {
            push_physical(&mut b, &config.priors, false);
            let s = NetworkShape::new(config.hidden.clone());
            let bias = softplus_inverse(config.ham_multiplier);
            push_he_params(&mut b, "area", &s.sizes(), bias, &mut rng);
            shape = Some(s);
        }
    }
    debug_assert!(b.len() > 0 || config.kind == ModelKind::Benchmark);
    ModelSpec {
        kind: config.kind,
        params: b.build(),
        shape,
        scaler: FeatureScaler::identity(),
        target: TargetScale::default(),
        version: 0,
        config: config.clone(),
    }
}

/// Where the gradient of one prediction should be accumulated.
///
/// `seed` maps the prediction to the factor applied to its gradient, so a loss
/// derivative can be formed without a second forward pass.
pub struct GradSink<'a> {
    pub grad: &'a mut [f64],
    pub seed: &'a dyn Fn(f64) -> f64,
}

/// Index range of each sub-model inside the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub physical: (usize, usize),
    pub network: (usize, usize),
}

impl ModelSpec {
    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn layout(&self) -> Layout {
        let n = self.params.len();
        match self.kind {
            ModelKind::Benchmark => Layout { physical: (0, 0), network: (0, 0) },
            ModelKind::Lr | ModelKind::Nn | ModelKind::Mtl => Layout { physical: (0, 0), network: (0, n) },
            ModelKind::Mm => Layout { physical: (0, 6), network: (6, 6) },
            ModelKind::Hem => Layout { physical: (0, 6), network: (6, n) },
            ModelKind::Ham => Layout { physical: (0, 5), network: (5, n) },
        }
    }

    /// A freshly initialized copy (same configuration and seed) that keeps the
    /// scaling and continues the version counter.
    pub fn reinitialized(&self) -> ModelSpec {
        let mut m = init_model(&self.config);
        m.params = self.params_with_values(m.params.values.clone());
        m.scaler = self.scaler.clone();
        m.target = self.target;
        m.version = self.version + 1;
        m
    }

    fn params_with_values(&self, values: Vec<f64>) -> ParameterSet {
        let mut p = self.params.clone();
        p.values = values;
        p
    }

    /// Fits input and output scaling on `data`.
    pub fn calibrate_scaling(&mut self, data: &[Observation]) {
        if let Some(s) = FeatureScaler::fit(data) {
            self.scaler = s;
        }
        if let Some(t) = TargetScale::fit(data) {
            self.target = t;
        }
    }

    /// Current physical parameters (HAM reports its initial multiplier as
    /// `c_d`).
    pub fn physical_params(&self) -> Option<MechanisticParams> {
        let v = &self.params.values;
        match self.kind {
            ModelKind::Mm | ModelKind::Hem => Some(MechanisticParams::from_array([v[0], v[1], v[2], v[3], v[4], v[5]])),
            ModelKind::Ham => Some(MechanisticParams::from_array([
                v[0],
                v[1],
                v[2],
                v[3],
                v[4],
                self.config.ham_multiplier,
            ])),
            _ => None,
        }
    }

    /// Prediction for one observation.
    pub fn predict(&self, obs: &Observation) -> Result<f64, ModelError> {
        self.evaluate(obs, None)
    }

    /// Prediction, optionally accumulating `seed(prediction) * d(prediction)/d(params)`.
    pub fn evaluate(&self, obs: &Observation, sink: Option<GradSink<'_>>) -> Result<f64, ModelError> {
        let v = &self.params.values;
        let x = &obs.x;
        let y = match self.kind {
            ModelKind::Benchmark => return Err(ModelError::NoForward),
            ModelKind::Lr => {
                let xs = self.scaler.apply(x);
                let net = v[6] + (0..N_FEATURES).map(|i| v[i] * xs[i]).sum::<f64>();
                let y = self.target.mean + self.target.std * net;
                if let Some(s) = sink {
                    let g = (s.seed)(y) * self.target.std;
                    for i in 0..N_FEATURES {
                        s.grad[i] += g * xs[i];
                    }
                    s.grad[6] += g;
                }
                y
            }
            ModelKind::Nn => {
                let sizes = self.shape.as_ref().expect("network shape").sizes();
                let mlp = Mlp::new(&sizes);
                let xs = self.scaler.apply(x);
                let mut trace = MlpTrace::default();
                let net = mlp.forward(v, &xs, &mut trace);
                let y = self.target.mean + self.target.std * net;
                if let Some(s) = sink {
                    mlp.backward(v, &trace, (s.seed)(y) * self.target.std, s.grad);
                }
                y
            }
            ModelKind::Mtl => {
                let shape = &self.config.mtl;
                let task = task_index(obs.well_id, shape.n_wells)?;
                let net_model = Mtl {
                    shape,
                    input_dim: N_FEATURES,
                };
                let xs = self.scaler.apply(x);
                let mut trace = MtlTrace::default();
                let net = net_model.forward(v, &xs, task, &mut trace);
                let y = self.target.mean + self.target.std * net;
                if let Some(s) = sink {
                    net_model.backward(v, &trace, (s.seed)(y) * self.target.std, s.grad);
                }
                y
            }
            ModelKind::Mm => {
                let area = effective_area(x[feature::CHOKE], &self.config.geometry)?;
                match sink {
                    None => {
                        let fluid = fluid_f64(v);
                        mechanistic::choke_flow(&fluid, v[5], area, x)?
                    }
                    Some(s) => {
                        let fluid = fluid_dual(v);
                        let cd = Dual::<6>::var(v[5], 5);
                        let q = mechanistic::choke_flow(&fluid, cd, area, x)?;
                        let seed = (s.seed)(q.v);
                        for i in 0..6 {
                            s.grad[i] += seed * q.d[i];
                        }
                        q.v
                    }
                }
            }
            ModelKind::Hem => {
                let sizes = self.shape.as_ref().expect("network shape").sizes();
                let mlp = Mlp::new(&sizes);
                let area = effective_area(x[feature::CHOKE], &self.config.geometry)?;
                let xs = self.scaler.apply(x);
                let mut trace = MlpTrace::default();
                let net = mlp.forward(&v[6..], &xs, &mut trace);
                let correction = self.target.std * net;
                match sink {
                    None => {
                        let fluid = fluid_f64(v);
                        mechanistic::choke_flow(&fluid, v[5], area, x)? + correction
                    }
                    Some(s) => {
                        let fluid = fluid_dual(v);
                        let cd = Dual::<6>::var(v[5], 5);
                        let q = mechanistic::choke_flow(&fluid, cd, area, x)?;
                        let y = q.v + correction;
                        let seed = (s.seed)(y);
                        for i in 0..6 {
                            s.grad[i] += seed * q.d[i];
                        }
                        mlp.backward(&v[6..], &trace, seed * self.target.std, &mut s.grad[6..]);
                        y
                    }
                }
            }
            ModelKind::Ham => {
                let sizes = self.shape.as_ref().expect("network shape").sizes();
                let mlp = Mlp::new(&sizes);
                let area = effective_area(x[feature::CHOKE], &self.config.geometry)?;
                let xs = self.scaler.apply(x);
                let mut trace = MlpTrace::default();
                let net = mlp.forward(&v[5..], &xs, &mut trace);
                let multiplier = softplus(net);
                match sink {
                    None => {
                        let fluid = fluid_f64(v);
                        mechanistic::choke_flow(&fluid, multiplier, area, x)?
                    }
                    Some(s) => {
                        let fluid = fluid_dual(v);
                        let m = Dual::<6>::var(multiplier, 5);
                        let q = mechanistic::choke_flow(&fluid, m, area, x)?;
                        let seed = (s.seed)(q.v);
                        for i in 0..5 {
                            s.grad[i] += seed * q.d[i];
                        }
                        let dnet = q.d[5] * sigmoid(net);
                        mlp.backward(&v[5..], &trace, seed * dnet, &mut s.grad[5..]);
                        q.v
                    }
                }
            }
        };
        if !y.is_finite() {
            return Err(ModelError::NonFinite(format!("{} prediction", self.kind)));
        }
        Ok(y)
    }

    /// Values whose sign selects a branch of a non-smooth operation (ReLU
    /// inputs and the choked-flow clamp `p2/p1 - p_cr`). Finite-difference
    /// checks skip components whose perturbation flips one of these signs.
    pub fn branch_values(&self, obs: &Observation) -> Vec<f64> {
        let v = &self.params.values;
        let xs = self.scaler.apply(&obs.x);
        let mut out = Vec::new();
        let ratio = obs.x[feature::P_DOWNSTREAM] / obs.x[feature::P_UPSTREAM];
        match self.kind {
            ModelKind::Nn => {
                let sizes = self.shape.as_ref().expect("network shape").sizes();
                out = Mlp::new(&sizes).hidden_preactivations(v, &xs);
            }
            ModelKind::Mtl => {
                if let Ok(task) = task_index(obs.well_id, self.config.mtl.n_wells) {
                    let m = Mtl {
                        shape: &self.config.mtl,
                        input_dim: N_FEATURES,
                    };
                    out = m.relu_inputs(v, &xs, task);
                }
            }
            ModelKind::Mm => out.push(ratio - v[4]),
            ModelKind::Hem | ModelKind::Ham => {
                let off = if self.kind == ModelKind::Hem { 6 } else { 5 };
                out.push(ratio - v[4]);
                let sizes = self.shape.as_ref().expect("network shape").sizes();
                out.extend(Mlp::new(&sizes).hidden_preactivations(&v[off..], &xs));
            }
            ModelKind::Lr | ModelKind::Benchmark => {}
        }
        out
    }

    /// The affine map of a linear-regression model in raw input units:
    /// `(w, b)` with `y = w . x + b`.
    pub fn lr_coefficients(&self) -> Option<([f64; N_FEATURES], f64)> {
        if self.kind != ModelKind::Lr {
            return None;
        }
        let v = &self.params.values;
        let mut w = [0.0; N_FEATURES];
        let mut b = self.target.mean + self.target.std * v[6];
        for i in 0..N_FEATURES {
            w[i] = self.target.std * v[i] / self.scaler.std[i];
            b -= w[i] * self.scaler.mean[i];
        }
        Some((w, b))
    }
}

fn task_index(well_id: u32, n_wells: usize) -> Result<usize, ModelError> {
    if well_id == 0 || well_id as usize > n_wells {
        return Err(ModelError::WellOutOfRange {
            well: well_id,
            n_wells,
        });
    }
    Ok(well_id as usize - 1)
}

fn fluid_f64(v: &[f64]) -> mechanistic::Fluid<f64> {
    mechanistic::Fluid {
        rho_oil: v[0],
        rho_wat: v[1],
        kappa: v[2],
        m_gas: v[3],
        p_cr: v[4],
    }
}

fn fluid_dual(v: &[f64]) -> mechanistic::Fluid<Dual<6>> {
    mechanistic::Fluid {
        rho_oil: Dual::var(v[0], 0),
        rho_wat: Dual::var(v[1], 1),
        kappa: Dual::var(v[2], 2),
        m_gas: Dual::var(v[3], 3),
        p_cr: Dual::var(v[4], 4),
    }
}

/// Benchmark prediction: the previous observed flow rate, if any.
pub fn forward_benchmark(prev_y: Option<f64>) -> Option<f64> {
    prev_y
}

macro_rules! kind_forward {
    ($(#[$doc:meta])* $name:ident, $kind:expr) => {
        $(#[$doc])*
        pub fn $name(m: &ModelSpec, obs: &Observation) -> Result<f64, ModelError> {
            if m.kind != $kind {
                return Err(ModelError::InvalidInput(format!("expected a {} model, got {}", $kind, m.kind)));
            }
            m.predict(obs)
        }
    };
}

kind_forward!(
    /// `y = w . x + b` on standardized inputs.
    forward_lr, ModelKind::Lr);
kind_forward!(
    /// ReLU feed-forward network.
    forward_nn, ModelKind::Nn);
kind_forward!(
    /// Multi-task residual network; the task is the observation's well.
    forward_mtl, ModelKind::Mtl);
kind_forward!(
    /// Mechanistic choke model.
    forward_mm, ModelKind::Mm);
kind_forward!(
    /// Mechanistic model plus network correction.
    forward_hem, ModelKind::Hem);
kind_forward!(
    /// Mechanistic model with a network-scaled flow area.
    forward_ham, ModelKind::Ham);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Source;

    fn obs(x: [f64; 6]) -> Observation {
        Observation {
            t: 0,
            x,
            y: 0.0,
            source: Source::Mpfm,
            well_id: 1,
        }
    }

    const X: [f64; 6] = [0.5, 150e5, 100e5, 350.0, 0.3, 0.6];

    #[test]
    fn parameter_counts() {
        let nn = init_model(&ModelConfig::new(ModelKind::Nn, 1));
        let mm = init_model(&ModelConfig::new(ModelKind::Mm, 1));
        let hem = init_model(&ModelConfig::new(ModelKind::Hem, 1));
        let ham = init_model(&ModelConfig::new(ModelKind::Ham, 1));
        assert_eq!(nn.n_params(), 6 * 32 + 32 + 32 * 32 + 32 + 32 + 1);
        assert_eq!(mm.n_params(), 6);
        assert_eq!(hem.n_params(), mm.n_params() + nn.n_params());
        assert_eq!(ham.n_params(), mm.n_params() - 1 + nn.n_params());
        assert_eq!(mm.params.count_physical(), 6);
        assert_eq!(ham.params.count_physical(), 5);
        let mtl = init_model(&ModelConfig::new(ModelKind::Mtl, 1));
        assert_eq!(mtl.n_params(), MtlShape::default().param_count(6));
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_model(&ModelConfig::new(ModelKind::Nn, 5));
        let b = init_model(&ModelConfig::new(ModelKind::Nn, 5));
        let c = init_model(&ModelConfig::new(ModelKind::Nn, 6));
        assert_eq!(a.params.values, b.params.values);
        assert_ne!(a.params.values, c.params.values);
    }

    #[test]
    fn mm_starts_at_prior_means() {
        let mm = init_model(&ModelConfig::new(ModelKind::Mm, 1));
        assert_eq!(mm.params.values, PhysicalPriors::default().mean.to_array().to_vec());
        assert_eq!(mm.params.get("rho_wat"), Some(1000.0));
        assert_eq!(mm.params.prior_mean()[1], 1000.0);
        let mut cfg = ModelConfig::new(ModelKind::Mm, 1);
        cfg.priors = PhysicalPriors::seawater();
        let mm = init_model(&cfg);
        assert_eq!(mm.params.prior_mean()[1], 1025.0);
    }

    #[test]
    fn he_std_first_layer() {
        let mut cfg = ModelConfig::new(ModelKind::Nn, 11);
        cfg.hidden = vec![64];
        let m = init_model(&cfg);
        let w = &m.params.values[..64 * 6];
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        let target = (2.0f64 / 6.0).sqrt();
        assert!((sd - target).abs() / target < 0.1, "sd {sd} vs {target}");
        // biases start at zero
        assert!(m.params.values[64 * 6..64 * 7].iter().all(|b| *b == 0.0));
    }

    #[test]
    fn lr_examples() {
        let mut m = init_model(&ModelConfig::new(ModelKind::Lr, 0));
        m.params.values[6] = 3.0;
        assert_eq!(forward_lr(&m, &obs(X)).unwrap(), 3.0);
        m.params.values = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut x = X;
        x[0] = 2.0;
        assert_eq!(m.predict(&obs(x)).unwrap(), 2.0);
    }

    #[test]
    fn nn_hand_traced_relu() {
        let mut cfg = ModelConfig::new(ModelKind::Nn, 0);
        cfg.hidden = vec![6];
        let mut m = init_model(&cfg);
        let v = &mut m.params.values;
        v.iter_mut().for_each(|p| *p = 0.0);
        for i in 0..6 {
            v[i * 6 + i] = 1.0; // W1 = I
        }
        let w2 = 36 + 6;
        for i in 0..6 {
            v[w2 + i] = 1.0;
        }
        let x = [1.0, -1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(m.predict(&obs(x)).unwrap(), 1.0);

        v_zero_with_bias(&mut m, 2.5);
        assert_eq!(m.predict(&obs(X)).unwrap(), 2.5);
    }

    fn v_zero_with_bias(m: &mut ModelSpec, c: f64) {
        let n = m.params.len();
        m.params.values.iter_mut().for_each(|p| *p = 0.0);
        m.params.values[n - 1] = c;
    }

    #[test]
    fn mtl_zero_blocks_pass_first_input() {
        let mut cfg = ModelConfig::new(ModelKind::Mtl, 0);
        cfg.mtl.n_wells = 2;
        let mut m = init_model(&cfg);
        let h = cfg.mtl.width;
        let p = cfg.mtl.task_dim;
        let v = &mut m.params.values;
        let shared = cfg.mtl.shared_param_count(6);
        v[..shared].iter_mut().for_each(|q| *q = 0.0);
        v[0] = 1.0; // W0x[0,0] selects x1 into z[0]
        let out_w = shared - 1 - h;
        v[out_w] = 1.0;
        let x = [0.7, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut o = obs(x);
        assert!((m.predict(&o).unwrap() - 0.7).abs() < 1e-15);
        // negative values also pass: the identity path has no activation
        o.x[0] = -0.4;
        assert!((m.predict(&o).unwrap() + 0.4).abs() < 1e-15);
        let _ = p;
    }

    #[test]
    fn mtl_identical_task_vectors_identical_outputs() {
        let mut cfg = ModelConfig::new(ModelKind::Mtl, 3);
        cfg.mtl.n_wells = 2;
        let mut m = init_model(&cfg);
        let shared = cfg.mtl.shared_param_count(6);
        let p = cfg.mtl.task_dim;
        for k in 0..p {
            m.params.values[shared + p + k] = m.params.values[shared + k];
        }
        let mut a = obs(X);
        let b_out = m.predict(&a).unwrap();
        a.well_id = 2;
        assert_eq!(m.predict(&a).unwrap(), b_out);
        a.well_id = 3;
        assert!(matches!(m.predict(&a), Err(ModelError::WellOutOfRange { .. })));
    }

    #[test]
    fn hem_reduces_to_mm_and_bias() {
        let mut hem = init_model(&ModelConfig::new(ModelKind::Hem, 2));
        let mm = init_model(&ModelConfig::new(ModelKind::Mm, 2));
        hem.params.values[6..].iter_mut().for_each(|p| *p = 0.0);
        assert_eq!(hem.predict(&obs(X)).unwrap(), mm.predict(&obs(X)).unwrap());
        let n = hem.n_params();
        hem.params.values[n - 1] = 4.0;
        let mut x = X;
        x[0] = 0.0;
        assert_eq!(hem.predict(&obs(x)).unwrap(), 4.0);
    }

    #[test]
    fn ham_constant_multiplier_matches_mm() {
        let mut ham = init_model(&ModelConfig::new(ModelKind::Ham, 2));
        ham.params.values[5..].iter_mut().for_each(|p| *p = 0.0);
        let n = ham.n_params();
        let cd = 0.7;
        ham.params.values[n - 1] = softplus_inverse(cd);
        let mut mm = init_model(&ModelConfig::new(ModelKind::Mm, 2));
        mm.params.values[5] = cd;
        let a = ham.predict(&obs(X)).unwrap();
        let b = mm.predict(&obs(X)).unwrap();
        assert!(((a - b) / b).abs() < 1e-12);
        let mut x = X;
        x[0] = 0.0;
        assert_eq!(ham.predict(&obs(x)).unwrap(), 0.0);
    }

    #[test]
    fn ham_initial_multiplier() {
        let ham = init_model(&ModelConfig::new(ModelKind::Ham, 2));
        let n = ham.n_params();
        assert!((softplus(ham.params.values[n - 1]) - 0.84).abs() < 1e-12);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let mm = init_model(&ModelConfig::new(ModelKind::Mm, 2));
        assert!(forward_nn(&mm, &obs(X)).is_err());
        assert!(forward_mm(&mm, &obs(X)).is_ok());
    }

    #[test]
    fn benchmark_shift() {
        assert_eq!(forward_benchmark(Some(100.0)), Some(100.0));
        assert_eq!(forward_benchmark(Some(0.0)), Some(0.0));
        assert_eq!(forward_benchmark(None), None);
    }
}

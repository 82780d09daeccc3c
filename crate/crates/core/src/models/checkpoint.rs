//! Flat key-value checkpoint format.
//!
//! One `key = value` pair per line, `#` starts a comment line. Numbers are
//! written in Rust's shortest round-trip form, so reading a checkpoint back
//! reproduces every bit. Keys:
//!
//! ```text
//! format = vfm-checkpoint 1
//! kind = nn
//! version = 3
//! config = {...}                     model config as one-line JSON
//! shape = 32,32 6 1                  hidden widths, input dim, output dim ("none" if absent)
//! scaler.mean = m0,m1,...
//! scaler.std = s0,s1,...
//! target = mean std
//! param = name value prior_mean prior_std physical lo hi    (lo/hi "-" when unbounded)
//! optimizer.k = 12                   optional optimizer state
//! optimizer.m = ...
//! optimizer.v = ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{ModelConfig, ModelKind, ModelSpec, NetworkShape, ParamMeta, ParameterSet};
use crate::data::{FeatureScaler, TargetScale, N_FEATURES};
use crate::optim::OptimizerState;

const FORMAT: &str = "vfm-checkpoint 1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("inconsistent checkpoint: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Renders a model and, optionally, the optimizer state that goes with it.
pub fn to_string(model: &ModelSpec, state: Option<&OptimizerState>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "format = {FORMAT}");
    let _ = writeln!(s, "kind = {}", model.kind.label().to_ascii_lowercase());
    let _ = writeln!(s, "version = {}", model.version);
    let config = serde_json::to_string(&model.config).expect("model config serializes");
    let _ = writeln!(s, "config = {config}");
    match &model.shape {
        Some(sh) => {
            let widths = sh.layer_widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",");
            let _ = writeln!(s, "shape = {widths} {} {}", sh.input_dim, sh.output_dim);
        }
        None => s.push_str("shape = none\n"),
    }
    let _ = writeln!(s, "scaler.mean = {}", join(&model.scaler.mean));
    let _ = writeln!(s, "scaler.std = {}", join(&model.scaler.std));
    let _ = writeln!(s, "target = {} {}", model.target.mean, model.target.std);
    let p = &model.params;
    for i in 0..p.len() {
        let (lo, hi) = match p.bounds()[i] {
            Some((lo, hi)) => (lo.to_string(), hi.to_string()),
            None => ("-".into(), "-".into()),
        };
        let _ = writeln!(
            s,
            "param = {} {} {} {} {} {lo} {hi}",
            p.names()[i],
            p.values[i],
            p.prior_mean()[i],
            p.prior_std()[i],
            p.is_physical()[i],
        );
    }
    if let Some(st) = state {
        let _ = writeln!(s, "optimizer.k = {}", st.k);
        let _ = writeln!(s, "optimizer.m = {}", join(&st.m));
        let _ = writeln!(s, "optimizer.v = {}", join(&st.v));
    }
    s
}

pub fn save(path: &Path, model: &ModelSpec, state: Option<&OptimizerState>) -> Result<(), CheckpointError> {
    std::fs::write(path, to_string(model, state))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(ModelSpec, Option<OptimizerState>), CheckpointError> {
    from_str(&std::fs::read_to_string(path)?)
}

pub fn from_str(text: &str) -> Result<(ModelSpec, Option<OptimizerState>), CheckpointError> {
    let mut kind = None;
    let mut version = None;
    let mut config: Option<ModelConfig> = None;
    let mut shape: Option<Option<NetworkShape>> = None;
    let mut scaler_mean = None;
    let mut scaler_std = None;
    let mut target = None;
    let mut values = Vec::new();
    let mut meta = ParamMeta::default();
    let (mut opt_k, mut opt_m, mut opt_v) = (None, None, None);
    let mut format_seen = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |msg: String| CheckpointError::Parse { line, msg };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, val) = trimmed
            .split_once(" = ")
            .ok_or_else(|| err("expected `key = value`".into()))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
        let list = |s: &str| -> Result<Vec<f64>, CheckpointError> {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(',').map(num).collect()
        };
        match key {
            "format" => {
                if val != FORMAT {
                    return Err(err(format!("unsupported format `{val}`")));
                }
                format_seen = true;
            }
            "kind" => kind = Some(val.parse::<ModelKind>().map_err(err)?),
            "version" => version = Some(val.parse::<u64>().map_err(|_| err("bad version".into()))?),
            "config" => config = Some(serde_json::from_str(val).map_err(|e| err(e.to_string()))?),
            "shape" => {
                shape = Some(if val == "none" {
                    None
                } else {
                    let parts: Vec<&str> = val.split(' ').collect();
                    let [w, i, o] = parts[..] else {
                        return Err(err("shape needs widths, input and output".into()));
                    };
                    let usize_of = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad size `{s}`")));
                    let widths = if w.is_empty() {
                        Vec::new()
                    } else {
                        w.split(',').map(usize_of).collect::<Result<_, _>>()?
                    };
                    Some(NetworkShape {
                        layer_widths: widths,
                        input_dim: usize_of(i)?,
                        output_dim: usize_of(o)?,
                    })
                })
            }
            "scaler.mean" => scaler_mean = Some(list(val)?),
            "scaler.std" => scaler_std = Some(list(val)?),
            "target" => {
                let v: Vec<&str> = val.split(' ').collect();
                let [m, s] = v[..] else {
                    return Err(err("target needs mean and std".into()));
                };
                target = Some(TargetScale { mean: num(m)?, std: num(s)? });
            }
            "param" => {
                let f: Vec<&str> = val.split(' ').collect();
                let [name, value, mean, std, phys, lo, hi] = f[..] else {
                    return Err(err("param needs 7 fields".into()));
                };
                values.push(num(value)?);
                meta.names.push(name.to_string());
                meta.prior_mean.push(num(mean)?);
                meta.prior_std.push(num(std)?);
                meta.is_physical.push(phys.parse().map_err(|_| err(format!("bad flag `{phys}`")))?);
                meta.bounds.push(match (lo, hi) {
                    ("-", "-") => None,
                    _ => Some((num(lo)?, num(hi)?)),
                });
            }
            "optimizer.k" => opt_k = Some(val.parse::<u64>().map_err(|_| err("bad step count".into()))?),
            "optimizer.m" => opt_m = Some(list(val)?),
            "optimizer.v" => opt_v = Some(list(val)?),
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }
    if !format_seen {
        return Err(CheckpointError::Missing("format"));
    }
    let kind = kind.ok_or(CheckpointError::Missing("kind"))?;
    let config = config.ok_or(CheckpointError::Missing("config"))?;
    if config.kind != kind {
        return Err(CheckpointError::Inconsistent("kind differs from config".into()));
    }
    let arr = |v: Option<Vec<f64>>, key: &'static str| -> Result<[f64; N_FEATURES], CheckpointError> {
        let v = v.ok_or(CheckpointError::Missing(key))?;
        v.try_into()
            .map_err(|_| CheckpointError::Inconsistent(format!("{key} needs {N_FEATURES} values")))
    };
    let n = values.len();
    let params = ParameterSet::from_parts(values, meta).map_err(CheckpointError::Inconsistent)?;
    let model = ModelSpec {
        kind,
        params,
        shape: shape.ok_or(CheckpointError::Missing("shape"))?,
        scaler: FeatureScaler {
            mean: arr(scaler_mean, "scaler.mean")?,
            std: arr(scaler_std, "scaler.std")?,
        },
        target: target.ok_or(CheckpointError::Missing("target"))?,
        version: version.ok_or(CheckpointError::Missing("version"))?,
        config,
    };
    let state = match (opt_k, opt_m, opt_v) {
        (None, None, None) => None,
        (Some(k), Some(m), Some(v)) => {
            if m.len() != n || v.len() != n {
                return Err(CheckpointError::Inconsistent("optimizer moments differ in length from parameters".into()));
            }
            Some(OptimizerState { m, v, k })
        }
        _ => return Err(CheckpointError::Inconsistent("partial optimizer state".into())),
    };
    Ok((model, state))
}

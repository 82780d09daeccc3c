//! Batch MAP fitting with mini-batches and chronological early stopping.
//!
//! The optimizer works on the objective divided by `N s^2 / sigma_eps^2`
//! (same minimizer, `s` being the target std of the fitting set) and in
//! prior-standardized coordinates `z_i = theta_i / sigma_i`, so one learning
//! rate serves parameters whose natural scales differ by orders of magnitude.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;

use super::{optimizer_step, BatchSize, EarlyStoppingConfig, LossSpec, OptimError, OptimizerConfig, OptimizerState, PriorMode};
use crate::data::{Observation, TargetScale};
use crate::diff::{accumulate_data_term, accumulate_prior_term};
use crate::models::ModelSpec;
use crate::rng;

/// The scaled MAP objective
/// `(1/|B|) sum_B (r/s)^2 + sigma_eps^2 / (N s^2) * prior`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedObjective {
    pub scale: f64,
    pub prior_weight: f64,
    pub prior_mode: PriorMode,
}

impl NormalizedObjective {
    pub fn new(loss: &LossSpec, scale: f64, n_total: usize) -> Self {
        let n = n_total.max(1) as f64;
        Self {
            scale,
            prior_weight: loss.noise_std * loss.noise_std / (n * scale * scale),
            prior_mode: loss.prior_mode,
        }
    }

    /// Uses the std of the targets in `data` as scale.
    pub fn for_data(loss: &LossSpec, data: &[Observation]) -> Self {
        let scale = TargetScale::fit(data).map(|t| t.std).unwrap_or(1.0);
        Self::new(loss, scale, data.len())
    }
}

/// Value of the normalized objective on `batch`; writes its gradient with
/// respect to the standardized coordinates into `grad_z`.
pub fn objective_gradient(
    m: &ModelSpec,
    batch: &[&Observation],
    obj: &NormalizedObjective,
    grad_z: &mut [f64],
) -> Result<f64, OptimError> {
    grad_z.iter_mut().for_each(|g| *g = 0.0);
    let w = 1.0 / (batch.len().max(1) as f64 * obj.scale * obj.scale);
    let data = accumulate_data_term(m, batch, w, grad_z)?;
    let prior = accumulate_prior_term(&m.params, obj.prior_mode, obj.prior_weight, grad_z);
    for (g, s) in grad_z.iter_mut().zip(m.params.prior_std()) {
        *g *= s;
    }
    Ok(data + prior)
}

/// Applies one optimizer step in standardized coordinates and clips bounded
/// parameters. Leaves the model untouched on error.
pub(crate) fn descend(
    m: &mut ModelSpec,
    state: &mut OptimizerState,
    grad_z: &[f64],
    cfg: &OptimizerConfig,
    k: u64,
) -> Result<(), OptimError> {
    let (values, meta) = m.params.split_mut();
    let mut z: Vec<f64> = values.iter().zip(&meta.prior_std).map(|(v, s)| v / s).collect();
    optimizer_step(&mut z, state, grad_z, cfg, k)?;
    for i in 0..values.len() {
        let mut v = z[i] * meta.prior_std[i];
        if let Some((lo, hi)) = meta.bounds[i] {
            v = v.clamp(lo, hi);
        }
        values[i] = v;
    }
    Ok(())
}

/// Mean of `(r / s)^2` over `data`.
fn scaled_mse(m: &ModelSpec, data: &[Observation], scale: f64) -> f64 {
    let mut total = 0.0;
    for o in data {
        match m.predict(o) {
            Ok(y) => {
                let r = (o.y - y) / scale;
                total += r * r;
            }
            Err(_) => return f64::INFINITY,
        }
    }
    total / data.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    /// `NaN` when no validation set was carved out.
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: ModelSpec,
    pub curve: Vec<CurvePoint>,
    /// Epoch whose parameters were returned (1-based).
    pub best_epoch: usize,
    /// Set when the validation tail was empty and a fixed epoch count was used.
    pub fixed_epochs: bool,
}

impl FitOutcome {
    /// Writes the training curve as `epoch,train_loss,val_loss`.
    pub fn write_curve_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "epoch,train_loss,val_loss")?;
        for p in &self.curve {
            writeln!(f, "{},{},{}", p.epoch, p.train_loss, p.val_loss)?;
        }
        f.flush()
    }
}

/// MAP fit of `m` on the chronological stream `train`.
///
/// The last `ceil(N * val_fraction)` observations (at most `N - 1`) are held
/// out; mini-batch epochs run over the rest until the validation error has not
/// improved for `patience` epochs or `max_epochs` is reached, and the
/// best-validation parameters are returned. With fewer than two observations
/// no validation set exists and exactly `max_epochs` epochs are run.
pub fn fit_map(
    m: &ModelSpec,
    train: &[Observation],
    loss: &LossSpec,
    ocfg: &OptimizerConfig,
    escfg: &EarlyStoppingConfig,
) -> Result<FitOutcome, OptimError> {
    if train.is_empty() {
        return Err(OptimError::EmptyData);
    }
    loss.validate()?;
    ocfg.validate()?;
    escfg.validate()?;

    let n = train.len();
    let n_val = if n < 2 {
        0
    } else {
        ((n as f64 * escfg.val_fraction).ceil() as usize).min(n - 1)
    };
    let (fit_set, val_set) = train.split_at(n - n_val);
    let fixed_epochs = val_set.is_empty();
    let obj = NormalizedObjective::for_data(loss, fit_set);

    let mut model = m.clone();
    let mut state = OptimizerState::new(model.n_params());
    let mut grad = vec![0.0; model.n_params()];
    let mut order: Vec<&Observation> = fit_set.iter().collect();
    let batch = match ocfg.batch_size {
        BatchSize::All => order.len(),
        BatchSize::Size(b) => b.min(order.len()),
    };
    let mut rng = rng::stream(ocfg.seed, "batching");

    let mut curve = Vec::new();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut stale = 0;
    let mut k = 0u64;
    for epoch in 1..=escfg.max_epochs {
        if batch < order.len() {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(batch) {
            let value = match objective_gradient(&model, chunk, &obj, &mut grad) {
                Ok(v) if v.is_finite() => v,
                _ => return diverged(best, model, curve, epoch, fixed_epochs),
            };
            k += 1;
            if descend(&mut model, &mut state, &grad, ocfg, k).is_err() {
                return diverged(best, model, curve, epoch, fixed_epochs);
            }
            epoch_loss += value;
            n_batches += 1;
        }
        let train_loss = epoch_loss / n_batches as f64;
        if fixed_epochs {
            curve.push(CurvePoint {
                epoch,
                train_loss,
                val_loss: f64::NAN,
            });
            continue;
        }
        let val_loss = scaled_mse(&model, val_set, obj.scale);
        curve.push(CurvePoint {
            epoch,
            train_loss,
            val_loss,
        });
        if !val_loss.is_finite() {
            return diverged(best, model, curve, epoch, fixed_epochs);
        }
        match &best {
            Some((b, _, _)) if val_loss >= *b => {
                stale += 1;
                if stale >= escfg.patience {
                    break;
                }
            }
            _ => {
                best = Some((val_loss, epoch, model.params.values.clone()));
                stale = 0;
            }
        }
    }

    let best_epoch = match best {
        Some((_, epoch, values)) => {
            model.params.values = values;
            epoch
        }
        None => escfg.max_epochs,
    };
    model.version = m.version + 1;
    Ok(FitOutcome {
        model,
        curve,
        best_epoch,
        fixed_epochs,
    })
}

/// Falls back to the best epoch seen so far, or reports divergence.
fn diverged(
    best: Option<(f64, usize, Vec<f64>)>,
    mut model: ModelSpec,
    curve: Vec<CurvePoint>,
    epoch: usize,
    fixed_epochs: bool,
) -> Result<FitOutcome, OptimError> {
    match best {
        Some((_, best_epoch, values)) => {
            model.params.values = values;
            model.version += 1;
            Ok(FitOutcome {
                model,
                curve,
                best_epoch,
                fixed_epochs,
            })
        }
        None => Err(OptimError::Diverged { epoch }),
    }
}

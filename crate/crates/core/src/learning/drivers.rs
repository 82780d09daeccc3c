use std::collections::BTreeMap;

use super::{days_to_seconds, fit_fresh, windowed, LearningError, LearningMode, LogEntry, PredictionLog, RetrainEvent, ScheduleConfig};
use crate::data::{DataSplit, Observation, TargetScale};
use crate::models::{ModelKind, ModelSpec};
use crate::optim::{descend, objective_gradient, NormalizedObjective, OptimizerState, PriorMode};

fn record(log: &mut PredictionLog, model: &ModelSpec, obs: &Observation) {
    let y_pred = model.predict(obs).ok();
    if y_pred.is_none() {
        log.metadata.failed_predictions += 1;
    }
    log.entries.push(LogEntry {
        t: obs.t,
        well_id: obs.well_id,
        y_true: obs.y,
        y_pred,
        model_version: model.version,
        source: obs.source,
    });
}

/// Periodic batch learning.
///
/// Every test observation is predicted with the current model before it joins
/// the history. Whenever the clock passes `split_time + i * period`, a new
/// model is fitted from prior initialization on the (windowed) history, with
/// freshly fitted scaling. A failed refit keeps the previous model and is
/// recorded in the log metadata.
pub fn run_pbl(m0: &ModelSpec, split: &DataSplit, cfg: &ScheduleConfig) -> Result<PredictionLog, LearningError> {
    let LearningMode::Pbl { period_days } = cfg.mode else {
        return Err(LearningError::WrongMode("run_pbl needs a PBL schedule"));
    };
    cfg.validate()?;
    let period = days_to_seconds(period_days);
    let mut history: Vec<Observation> = split.train.clone();
    history.reserve(split.test.len());
    let mut model = m0.clone();
    let mut log = PredictionLog::new(m0.kind.label(), &cfg.label(), Some(*cfg));
    let mut next = period.map(|p| split.split_time.saturating_add(p));

    for obs in &split.test {
        while let (Some(boundary), Some(p)) = (next, period) {
            if obs.t < boundary {
                break;
            }
            let data = windowed(&history, cfg.window, boundary);
            let error = match fit_fresh(&model.config, data, cfg) {
                Ok(mut fresh) => {
                    fresh.version = model.version + 1;
                    model = fresh;
                    None
                }
                Err(e) => Some(e.to_string()),
            };
            log.metadata.retrains.push(RetrainEvent {
                t: boundary,
                n_train: data.len(),
                version: model.version,
                error,
            });
            next = boundary.checked_add(p);
        }
        record(&mut log, &model, obs);
        history.push(*obs);
    }
    Ok(log)
}

/// Online learning.
///
/// Each observation is predicted first; then `steps` optimizer steps are taken
/// on its single-observation objective, warm-started from the current
/// parameters, with only the physical parameters regularized towards their
/// initial priors. Scaling stays as fitted on the training data and the
/// optimizer state carries over between observations. A failed update is
/// rolled back and its timestamp recorded.
pub fn run_ol(m0: &ModelSpec, split: &DataSplit, cfg: &ScheduleConfig) -> Result<PredictionLog, LearningError> {
    let LearningMode::Ol { steps } = cfg.mode else {
        return Err(LearningError::WrongMode("run_ol needs an OL schedule"));
    };
    cfg.validate()?;
    let mut log = PredictionLog::new(m0.kind.label(), &cfg.label(), Some(*cfg));
    let mut model = m0.clone();
    if steps == 0 {
        for obs in &split.test {
            record(&mut log, &model, obs);
        }
        return Ok(log);
    }
    if split.train.is_empty() {
        return Err(LearningError::EmptyTraining);
    }
    let mut loss = cfg.loss.resolve(&split.train)?;
    loss.prior_mode = PriorMode::PhysicalOnly;
    let scale = TargetScale::fit(&split.train).map(|t| t.std).unwrap_or(1.0);
    let obj = NormalizedObjective::new(&loss, scale, 1);

    let n = model.n_params();
    let mut state = OptimizerState::new(n);
    let mut grad = vec![0.0; n];
    for obs in &split.test {
        record(&mut log, &model, obs);
        let backup = (model.params.values.clone(), state.clone());
        let mut ok = true;
        for _ in 0..steps {
            let k = state.k + 1;
            if objective_gradient(&model, &[obs], &obj, &mut grad).is_err()
                || descend(&mut model, &mut state, &grad, &cfg.ocfg, k).is_err()
                || !model.params.values.iter().all(|v| v.is_finite())
            {
                ok = false;
                break;
            }
        }
        if ok {
            model.version += 1;
        } else {
            model.params.values = backup.0;
            state = backup.1;
            log.metadata.skipped_updates.push(obs.t);
        }
    }
    Ok(log)
}

/// Benchmark: each observation is predicted by the previous flow rate of the
/// same well, training history included.
pub fn run_benchmark(split: &DataSplit) -> PredictionLog {
    let mut log = PredictionLog::new(ModelKind::Benchmark.label(), "benchmark", None);
    let mut last: BTreeMap<u32, f64> = BTreeMap::new();
    for o in &split.train {
        last.insert(o.well_id, o.y);
    }
    for o in &split.test {
        log.entries.push(LogEntry {
            t: o.t,
            well_id: o.well_id,
            y_true: o.y,
            y_pred: last.get(&o.well_id).copied(),
            model_version: 0,
            source: o.source,
        });
        last.insert(o.well_id, o.y);
    }
    log
}

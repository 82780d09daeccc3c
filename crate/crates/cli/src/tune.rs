//! Hyperparameter search on the initial training data.
//!
//! The initial training window of every well is split once more; methods run
//! on the inner split and candidates are ranked by cross-well mean MAPE on the
//! inner test part. The initial method is tuned first because every other
//! method starts from the model it produces.

use std::fmt::Write as _;

use vfm_core::eval::MetricReport;
use vfm_core::learning::SECONDS_PER_DAY;
use vfm_core::models::ModelSpec;
use vfm_core::optim::{grid_search, Candidate, Grid, Method, Schedule};
use vfm_core::{ModelKind, OptimizerConfig, PredictionLog, WellDataset};

use crate::config::{model_key, Case, HyperTable, MethodMode, MethodSpec, StudyConfig};
use crate::study::{build_units, case_splits, fit_initial, n_wells, run_method};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct TuneRow {
    pub case: Case,
    pub method: String,
    pub model: ModelKind,
    pub config: OptimizerConfig,
    /// Cross-well mean MAPE on the inner test part, or why the run failed.
    pub score: Result<f64, String>,
    pub chosen: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub hyper: HyperTable,
    pub rows: Vec<TuneRow>,
}

/// Candidate settings of one (method, model) cell.
pub fn candidates(cfg: &StudyConfig, method: &MethodSpec, kind: ModelKind, base: &OptimizerConfig) -> Vec<Candidate> {
    let decay = Schedule::PowerDecay(cfg.tune.lr_decay);
    let grid = match method.mode {
        MethodMode::Pbl { .. } => {
            let (m, s) = if kind == ModelKind::Lr {
                (Method::Sgd, decay)
            } else {
                (Method::Adam, Schedule::Constant)
            };
            Grid {
                gammas: cfg.tune.pbl_gammas.clone(),
                steps: vec![1],
                methods: vec![m],
                schedules: vec![s],
            }
        }
        MethodMode::Ol if kind == ModelKind::Lr => Grid {
            methods: vec![Method::Sgd],
            schedules: vec![Schedule::Constant, decay],
            ..cfg.tune.ol.clone()
        },
        MethodMode::Ol => cfg.tune.ol.clone(),
    };
    grid.candidates(base)
}

fn set_cell(hyper: &mut HyperTable, case: Case, method: &str, kind: ModelKind, c: OptimizerConfig) {
    hyper
        .entry(case.key().to_string())
        .or_default()
        .entry(method.to_string())
        .or_default()
        .insert(model_key(kind), c);
}

/// Tunes every (method, model) cell of the given cases.
pub fn tune(cfg: &StudyConfig, wells: &[WellDataset], cases: &[Case]) -> Result<TuneOutcome, CliError> {
    let mut work = cfg.clone();
    let mut rows = Vec::new();
    let window = (cfg.rolling_window_days * SECONDS_PER_DAY as f64).round() as i64;
    let n = n_wells(wells);
    for &case in cases {
        let split_time = cfg.split_time(case);
        let outer = case_splits(wells, case, split_time)?;
        let first = outer.iter().map(|s| s.train[0].t).min().unwrap_or(split_time);
        let inner_time = split_time - (cfg.tune.holdout_fraction * (split_time - first) as f64).round() as i64;
        let inner_wells = outer
            .iter()
            .zip(wells)
            .map(|(s, w)| WellDataset::new(w.well_id, s.train.clone()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(e.to_string()))?;
        let inner = case_splits(&inner_wells, case, inner_time)?;

        let mut order: Vec<&MethodSpec> = cfg.methods.iter().filter(|m| m.id == cfg.initial_method).collect();
        order.extend(cfg.methods.iter().filter(|m| m.id != cfg.initial_method));
        for method in order {
            let tunes_initial = method.id == cfg.initial_method;
            for &kind in &cfg.models {
                let units = build_units(&[kind], &inner_wells, &inner);
                let cached: Vec<ModelSpec> = if tunes_initial {
                    Vec::new()
                } else {
                    units
                        .iter()
                        .map(|u| fit_initial(&work, case, u, n))
                        .collect::<Result<_, _>>()?
                };
                let base = work.hyper[case.key()][&method.id][&model_key(kind)];
                let cands = candidates(cfg, method, kind, &base);
                let evaluate = |c: &OptimizerConfig| -> Result<f64, String> {
                    let mut trial = work.clone();
                    set_cell(&mut trial.hyper, case, &method.id, kind, *c);
                    let mut logs = Vec::with_capacity(units.len());
                    for (i, u) in units.iter().enumerate() {
                        let fresh;
                        let m0 = if tunes_initial {
                            fresh = fit_initial(&trial, case, u, n).map_err(|e| e.to_string())?;
                            &fresh
                        } else {
                            &cached[i]
                        };
                        logs.push(run_method(&trial, case, u, m0, method).map_err(|e| e.to_string())?);
                    }
                    let report = MetricReport::from_log(&PredictionLog::merge(logs), window).map_err(|e| e.to_string())?;
                    if report.cross_well_mean.is_finite() {
                        Ok(report.cross_well_mean)
                    } else {
                        Err("non-finite MAPE".into())
                    }
                };
                let outcome = grid_search(&cands, evaluate).map_err(|e| {
                    CliError::Numeric(format!("tuning {} {} ({}): {e}", kind.label(), method.label, case.key()))
                })?;
                for row in outcome.rows {
                    rows.push(TuneRow {
                        case,
                        method: method.id.clone(),
                        model: kind,
                        chosen: row.config == outcome.best,
                        config: row.config,
                        score: row.score,
                    });
                }
                set_cell(&mut work.hyper, case, &method.id, kind, outcome.best);
            }
        }
    }
    Ok(TuneOutcome { hyper: work.hyper, rows })
}

fn describe(c: &OptimizerConfig, mode: MethodMode, kind: ModelKind) -> String {
    let method = match c.method {
        Method::Sgd => "SGD",
        Method::Adam => "Adam",
    };
    let tag = match (kind, c.schedule) {
        (ModelKind::Lr, Schedule::PowerDecay(_)) => "(s.) ",
        (ModelKind::Lr, Schedule::Constant) => "(c.) ",
        _ => "",
    };
    let steps = match mode {
        MethodMode::Pbl { .. } => "E.S.".to_string(),
        MethodMode::Ol => c.steps.to_string(),
    };
    format!("{tag}{:e} | {steps} | {method}", c.gamma0)
}

/// Markdown table with one row per model and `gamma | E | optimizer` per
/// method.
pub fn hyper_table_markdown(cfg: &StudyConfig, hyper: &HyperTable, case: Case) -> String {
    let mut s = String::new();
    let _ = write!(s, "| Model |");
    for m in &cfg.methods {
        let _ = write!(s, " {} (gamma, E, optimizer) |", m.label);
    }
    s.push('\n');
    s.push_str("|---|");
    for _ in &cfg.methods {
        s.push_str("---|");
    }
    s.push('\n');
    for &kind in &cfg.models {
        let _ = write!(s, "| {} |", kind.label());
        for m in &cfg.methods {
            let cell = hyper
                .get(case.key())
                .and_then(|t| t.get(&m.id))
                .and_then(|t| t.get(&model_key(kind)))
                .map(|c| describe(c, m.mode, kind))
                .unwrap_or_else(|| "-".into());
            let _ = write!(s, " {cell} |");
        }
        s.push('\n');
    }
    s
}

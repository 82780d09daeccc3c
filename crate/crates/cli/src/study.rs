//! End-to-end study: initial fits, the learning drivers and the metrics.

use std::borrow::Cow;

use rayon::prelude::*;
use vfm_core::data::{ingest_csv, Source};
use vfm_core::eval::{summarize, MetricReport, SummaryTable};
use vfm_core::learning::{fit_fresh, LearningError, Window, SECONDS_PER_DAY};
use vfm_core::models::ModelSpec;
use vfm_core::synth::{default_scenarios, generate_stream};
use vfm_core::{
    chronological_split, run_benchmark, run_ol, run_pbl, DataSplit, ModelConfig, ModelKind, PredictionLog,
    ScheduleConfig, WellDataset,
};

use crate::config::{Case, MethodMode, MethodSpec, StudyConfig};
use crate::CliError;

/// Well streams of the study: CSV files, explicit scenarios or the built-in
/// scenarios.
pub fn load_wells(cfg: &StudyConfig) -> Result<Vec<WellDataset>, CliError> {
    let mut wells = Vec::new();
    if !cfg.data.csv.is_empty() {
        for path in &cfg.data.csv {
            let report = ingest_csv(path).map_err(|e| CliError::Data(e.to_string()))?;
            if report.reject_count() > 0 {
                eprintln!("{}: {} rows rejected", path.display(), report.reject_count());
            }
            wells.extend(report.datasets);
        }
    } else {
        let scenarios = if cfg.data.scenarios.is_empty() {
            default_scenarios(cfg.seed)
        } else {
            cfg.data.scenarios.clone()
        };
        wells = scenarios
            .par_iter()
            .map(generate_stream)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(e.to_string()))?;
    }
    wells.sort_by_key(|w| w.well_id);
    if let Some(w) = wells.windows(2).find(|w| w[0].well_id == w[1].well_id) {
        return Err(CliError::Data(format!("well {} appears twice", w[0].well_id)));
    }
    if wells.is_empty() {
        return Err(CliError::Data("no wells".into()));
    }
    Ok(wells)
}

/// Per-well splits for a case; the well-test case keeps only well-test rows
/// on both sides of the split.
pub fn case_splits(wells: &[WellDataset], case: Case, split_time: i64) -> Result<Vec<DataSplit>, CliError> {
    wells
        .iter()
        .map(|w| {
            let s = chronological_split(w, split_time);
            let s = match case {
                Case::All => s,
                Case::Welltest => s.filter_source(Source::WellTest),
            };
            if s.train.is_empty() {
                return Err(CliError::Data(format!(
                    "well {} has no training data before the split ({})",
                    w.well_id,
                    case.title()
                )));
            }
            Ok(s)
        })
        .collect()
}

pub fn model_config(cfg: &StudyConfig, kind: ModelKind, n_wells: usize, unit: &str) -> ModelConfig {
    let mut mtl = cfg.model.mtl;
    mtl.n_wells = n_wells;
    ModelConfig {
        kind,
        hidden: cfg.model.hidden.clone(),
        mtl,
        priors: cfg.model.priors,
        geometry: cfg.model.geometry,
        ham_multiplier: cfg.model.ham_multiplier,
        seed: vfm_core::rng::derive_seed(cfg.seed, &format!("init/{unit}")),
    }
}

pub fn schedule_for(cfg: &StudyConfig, case: Case, method: &MethodSpec, kind: ModelKind) -> Result<ScheduleConfig, CliError> {
    let ocfg = cfg.optimizer(case, &method.id, kind)?;
    let mut s = match method.mode {
        MethodMode::Pbl { period_days } => ScheduleConfig::pbl(period_days, ocfg),
        MethodMode::Ol => ScheduleConfig::ol(ocfg.steps, ocfg),
    };
    s.loss = cfg.loss;
    s.early_stopping = cfg.early_stopping;
    if let Some(d) = method.sliding_window_days {
        s.window = Window::SlidingDays(d);
    }
    Ok(s)
}

fn numeric(context: String) -> impl Fn(LearningError) -> CliError {
    move |e| match e {
        LearningError::EmptyTraining => CliError::Data(format!("{context}: {e}")),
        other => CliError::Numeric(format!("{context}: {other}")),
    }
}

/// One model instance of a case: a single well, or every well for MTL.
#[derive(Debug, Clone)]
pub struct InitialModel {
    pub kind: ModelKind,
    /// `None` for the multi-well model.
    pub well_id: Option<u32>,
    pub model: ModelSpec,
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub case: Case,
    /// One merged log per (model, method), then the benchmark.
    pub logs: Vec<PredictionLog>,
    pub reports: Vec<MetricReport>,
    pub table: SummaryTable,
    pub initial: Vec<InitialModel>,
}

/// A model instance to train: one well, or every well merged for MTL.
pub struct Unit<'a> {
    pub kind: ModelKind,
    pub well_id: Option<u32>,
    pub split: Cow<'a, DataSplit>,
}

impl Unit<'_> {
    pub fn name(&self) -> String {
        match self.well_id {
            Some(id) => format!("{}/well{id}", self.kind.label()),
            None => format!("{}/all", self.kind.label()),
        }
    }
}

pub fn build_units<'a>(models: &[ModelKind], wells: &[WellDataset], splits: &'a [DataSplit]) -> Vec<Unit<'a>> {
    let mut units = Vec::new();
    for &kind in models {
        if kind == ModelKind::Mtl {
            units.push(Unit {
                kind,
                well_id: None,
                split: Cow::Owned(DataSplit::merge(splits)),
            });
        } else {
            for (w, s) in wells.iter().zip(splits) {
                units.push(Unit {
                    kind,
                    well_id: Some(w.well_id),
                    split: Cow::Borrowed(s),
                });
            }
        }
    }
    units
}

pub fn n_wells(wells: &[WellDataset]) -> usize {
    wells.iter().map(|w| w.well_id).max().unwrap_or(1) as usize
}

/// Initial model of a unit, fitted with the initial method's settings.
pub fn fit_initial(cfg: &StudyConfig, case: Case, unit: &Unit, n_wells: usize) -> Result<ModelSpec, CliError> {
    let initial_method = cfg
        .method(&cfg.initial_method)
        .ok_or_else(|| CliError::Config(format!("unknown initial method `{}`", cfg.initial_method)))?;
    let name = unit.name();
    let mconf = model_config(cfg, unit.kind, n_wells, &name);
    let init = schedule_for(cfg, case, initial_method, unit.kind)?;
    fit_fresh(&mconf, &unit.split.train, &init).map_err(numeric(format!("initial fit of {name}")))
}

pub fn run_method(
    cfg: &StudyConfig,
    case: Case,
    unit: &Unit,
    m0: &ModelSpec,
    method: &MethodSpec,
) -> Result<PredictionLog, CliError> {
    let sched = schedule_for(cfg, case, method, unit.kind)?;
    let ctx = format!("{} on {}", method.label, unit.name());
    let mut log = match method.mode {
        MethodMode::Pbl { .. } => run_pbl(m0, &unit.split, &sched),
        MethodMode::Ol => run_ol(m0, &unit.split, &sched),
    }
    .map_err(numeric(ctx))?;
    log.metadata.method = method.label.clone();
    Ok(log)
}

/// Fits the shared initial model of every (model, well) and runs every
/// configured method from it.
pub fn run_case(cfg: &StudyConfig, wells: &[WellDataset], case: Case) -> Result<CaseResult, CliError> {
    let splits = case_splits(wells, case, cfg.split_time(case))?;
    let n = n_wells(wells);
    let units = build_units(&cfg.models, wells, &splits);
    let outputs = units
        .par_iter()
        .map(|u| -> Result<(InitialModel, Vec<PredictionLog>), CliError> {
            let m0 = fit_initial(cfg, case, u, n)?;
            let logs = cfg
                .methods
                .iter()
                .map(|method| run_method(cfg, case, u, &m0, method))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((
                InitialModel {
                    kind: u.kind,
                    well_id: u.well_id,
                    model: m0,
                },
                logs,
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut logs = Vec::new();
    for &kind in &cfg.models {
        for (mi, _) in cfg.methods.iter().enumerate() {
            let parts: Vec<PredictionLog> = outputs
                .iter()
                .filter(|(init, _)| init.kind == kind)
                .map(|(_, l)| l[mi].clone())
                .collect();
            logs.push(PredictionLog::merge(parts));
        }
    }
    if cfg.include_benchmark {
        logs.push(PredictionLog::merge(splits.iter().map(run_benchmark).collect()));
    }
    let window = (cfg.rolling_window_days * SECONDS_PER_DAY as f64).round() as i64;
    let reports = logs
        .iter()
        .map(|l| {
            MetricReport::from_log(l, window)
                .map_err(|e| CliError::Numeric(format!("{} {}: {e}", l.metadata.model, l.metadata.method)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let table = summarize(&reports);
    Ok(CaseResult {
        case,
        logs,
        reports,
        table,
        initial: outputs.into_iter().map(|(i, _)| i).collect(),
    })
}

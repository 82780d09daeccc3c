//! The subcommands behind the `vfm` binary. Each one is a pure function of the
//! configuration, its input files and the seed, and overwrites its outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use vfm_core::data::{write_csv, Source};
use vfm_core::drift::{estimate_update_frequency, DriftError, ShiftReport};
use vfm_core::eval::{summarize, write_per_well_csv, MetricReport, SummaryTable};
use vfm_core::learning::SECONDS_PER_DAY;
use vfm_core::models::checkpoint;
use vfm_core::synth::{default_scenarios, generate_stream};
use vfm_core::{chronological_split, PredictionLog};

use crate::config::{model_key, Case, HyperTable, StudyConfig};
use crate::study::{load_wells, run_case, CaseResult};
use crate::tune::{hyper_table_markdown, tune, TuneOutcome};
use crate::CliError;

const LOG_MANIFEST: &str = "manifest.txt";

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io(path))
}

fn data_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

/// File stem of a method id or model label.
fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Writes one CSV per well under `out/data`. Returns the written paths.
pub fn cmd_simulate(cfg: &StudyConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let scenarios = if cfg.data.scenarios.is_empty() {
        default_scenarios(cfg.seed)
    } else {
        cfg.data.scenarios.clone()
    };
    let wells = scenarios
        .par_iter()
        .map(generate_stream)
        .collect::<Result<Vec<_>, _>>()
        .map_err(data_err)?;
    let dir = out.join("data");
    create_dir(&dir)?;
    let mut paths = Vec::new();
    for w in &wells {
        let path = dir.join(format!("well_{}.csv", w.well_id));
        write_csv(&path, w.observations()).map_err(data_err)?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Serialize)]
struct HyperFile<'a> {
    hyper: &'a HyperTable,
}

/// Runs the hyperparameter search and writes, under `out/tune`, the chosen
/// settings as TOML (pasteable into a study config), one markdown table per
/// case and every scored candidate.
pub fn cmd_tune(cfg: &StudyConfig, out: &Path) -> Result<TuneOutcome, CliError> {
    let wells = load_wells(cfg)?;
    let outcome = tune(cfg, &wells, &cfg.cases)?;
    let dir = out.join("tune");
    create_dir(&dir)?;
    let toml = toml::to_string(&HyperFile { hyper: &outcome.hyper }).map_err(|e| CliError::Numeric(e.to_string()))?;
    write_text(&dir.join("hyper.toml"), &toml)?;
    for &case in &cfg.cases {
        write_text(
            &dir.join(format!("hyper_{}.md", case.key())),
            &hyper_table_markdown(cfg, &outcome.hyper, case),
        )?;
    }
    let mut csv = String::from("case,method,model,optimizer,gamma0,schedule,steps,score,chosen\n");
    for r in &outcome.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{:?},{},{:?},{},{},{}",
            r.case.key(),
            r.method,
            model_key(r.model),
            r.config.method,
            r.config.gamma0,
            r.config.schedule,
            r.config.steps,
            match &r.score {
                Ok(s) => s.to_string(),
                Err(e) => format!("\"failed: {}\"", e.replace('"', "'")),
            },
            r.chosen
        );
    }
    write_text(&dir.join("candidates.csv"), &csv)?;
    Ok(outcome)
}

/// Writes the metric files of one case into `dir`.
fn write_metrics(dir: &Path, reports: &[MetricReport]) -> Result<SummaryTable, CliError> {
    create_dir(&dir.join("rolling"))?;
    let table = summarize(reports);
    table.write_csv(&dir.join("summary.csv")).map_err(data_err)?;
    write_text(&dir.join("summary.txt"), &table.to_text())?;
    write_per_well_csv(reports, &dir.join("per_well.csv")).map_err(data_err)?;
    for r in reports {
        let name = format!("{}_{}.csv", slug(&r.model), slug(&r.method));
        r.write_rolling_csv(&dir.join("rolling").join(name)).map_err(data_err)?;
    }
    Ok(table)
}

/// Full study. Per case, `out/<case>/` receives `logs/` (prediction logs
/// with metadata sidecars), `metrics/` and `models/` (initial-model
/// checkpoints). The resolved configuration goes to `out/config.toml`.
pub fn cmd_run(cfg: &StudyConfig, out: &Path) -> Result<Vec<CaseResult>, CliError> {
    let wells = load_wells(cfg)?;
    create_dir(out)?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    let mut results = Vec::new();
    for &case in &cfg.cases {
        let res = run_case(cfg, &wells, case)?;
        let base = out.join(case.key());
        let logs_dir = base.join("logs");
        let models_dir = base.join("models");
        create_dir(&logs_dir)?;
        create_dir(&models_dir)?;
        let mut manifest = String::new();
        for log in &res.logs {
            let name = format!("{}_{}.csv", slug(&log.metadata.model), slug(&log.metadata.method));
            log.write(&logs_dir.join(&name)).map_err(data_err)?;
            manifest.push_str(&name);
            manifest.push('\n');
        }
        write_text(&logs_dir.join(LOG_MANIFEST), &manifest)?;
        for init in &res.initial {
            let name = match init.well_id {
                Some(id) => format!("{}_well{id}.ckpt", model_key(init.kind)),
                None => format!("{}_all.ckpt", model_key(init.kind)),
            };
            checkpoint::save(&models_dir.join(name), &init.model, None).map_err(data_err)?;
        }
        write_metrics(&base.join("metrics"), &res.reports)?;
        results.push(res);
    }
    Ok(results)
}

/// Recomputes the metrics of a finished run from its logs in `out/<case>/logs`.
pub fn cmd_report(cfg: &StudyConfig, out: &Path) -> Result<Vec<(Case, SummaryTable)>, CliError> {
    let window = (cfg.rolling_window_days * SECONDS_PER_DAY as f64).round() as i64;
    let mut tables = Vec::new();
    for &case in &cfg.cases {
        let logs_dir = out.join(case.key()).join("logs");
        let manifest = logs_dir.join(LOG_MANIFEST);
        let names: Vec<String> = if manifest.exists() {
            fs::read_to_string(&manifest)
                .map_err(io(&manifest))?
                .lines()
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect()
        } else {
            let mut v: Vec<String> = fs::read_dir(&logs_dir)
                .map_err(io(&logs_dir))?
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.ends_with(".csv"))
                .collect();
            v.sort();
            v
        };
        if names.is_empty() {
            return Err(CliError::Data(format!("no prediction logs in {}", logs_dir.display())));
        }
        let reports = names
            .iter()
            .map(|n| {
                let log = PredictionLog::read(&logs_dir.join(n)).map_err(|e| CliError::Data(format!("{n}: {e}")))?;
                MetricReport::from_log(&log, window).map_err(|e| CliError::Numeric(format!("{n}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let table = write_metrics(&out.join(case.key()).join("metrics"), &reports)?;
        tables.push((case, table));
    }
    Ok(tables)
}

/// Outcome of the shift scan on one well.
#[derive(Debug, Clone)]
pub struct DetectRow {
    pub well_id: u32,
    /// `Err` when the well has too little training data to scan.
    pub report: Result<ShiftReport, String>,
}

/// Update-frequency estimation on the initial training data of every well;
/// writes `out/detect/<case>/well_<id>.csv` and a `summary.csv`.
pub fn cmd_detect(cfg: &StudyConfig, out: &Path) -> Result<Vec<(Case, Vec<DetectRow>)>, CliError> {
    let wells = load_wells(cfg)?;
    let mut all = Vec::new();
    for &case in &cfg.cases {
        let dir = out.join("detect").join(case.key());
        create_dir(&dir)?;
        let split_time = cfg.split_time(case);
        let rows = wells
            .par_iter()
            .map(|w| -> Result<DetectRow, CliError> {
                let split = chronological_split(w, split_time);
                let train: Vec<_> = match case {
                    Case::All => split.train,
                    Case::Welltest => split.train.into_iter().filter(|o| o.source == Source::WellTest).collect(),
                };
                let report = match estimate_update_frequency(&train, cfg.detect.t1_fraction, &cfg.detect.drift) {
                    Ok(r) => Ok(r),
                    Err(e @ DriftError::TooFewObservations { .. }) => Err(e.to_string()),
                    Err(e @ DriftError::InvalidConfig(_)) => return Err(CliError::Config(e.to_string())),
                    Err(e) => return Err(CliError::Numeric(format!("well {}: {e}", w.well_id))),
                };
                Ok(DetectRow {
                    well_id: w.well_id,
                    report,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut summary = String::from("well_id,t1,n_reference,n_points,detection_rate,confirmed_at,estimated_tau_days,note\n");
        for row in &rows {
            match &row.report {
                Ok(r) => {
                    r.write_csv(&dir.join(format!("well_{}.csv", row.well_id))).map_err(data_err)?;
                    let _ = writeln!(
                        summary,
                        "{},{},{},{},{},{},{},",
                        row.well_id,
                        r.t1,
                        r.n_reference,
                        r.points.len(),
                        r.detection_rate(),
                        r.confirmed_at.map(|i| r.points[i].t.to_string()).unwrap_or_default(),
                        r.estimated_tau
                            .map(|s| (s as f64 / SECONDS_PER_DAY as f64).to_string())
                            .unwrap_or_default()
                    );
                }
                Err(msg) => {
                    let _ = writeln!(summary, "{},,,,,,,{}", row.well_id, msg.replace(',', ";"));
                }
            }
        }
        write_text(&dir.join("summary.csv"), &summary)?;
        all.push((case, rows));
    }
    Ok(all)
}

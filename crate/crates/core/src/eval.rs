//! Prequential error metrics and summary tables.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::learning::{LogEntry, PredictionLog};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no scoreable entries for well {0}")]
    NoScoreableEntries(u32),
    #[error("empty log")]
    EmptyLog,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Default rolling-error window: 14 days.
pub const ROLLING_WINDOW: i64 = 14 * 86_400;

/// Percentiles reported for per-well MAPE.
pub const PERCENTILES: [f64; 5] = [10.0, 25.0, 50.0, 75.0, 90.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mape {
    /// Percent.
    pub value: f64,
    pub n_scored: usize,
    /// Entries with `y_true == 0`.
    pub n_zero_target: usize,
    /// Entries without a prediction.
    pub n_missing: usize,
}

/// `100 * mean(|y - y_hat| / |y|)` over the entries that have a prediction and
/// a nonzero target.
pub fn mape_of<'a, I: IntoIterator<Item = &'a LogEntry>>(entries: I) -> Option<Mape> {
    let mut sum = 0.0;
    let mut m = Mape {
        value: 0.0,
        n_scored: 0,
        n_zero_target: 0,
        n_missing: 0,
    };
    for e in entries {
        match e.y_pred {
            None => m.n_missing += 1,
            Some(_) if e.y_true == 0.0 => m.n_zero_target += 1,
            Some(p) => {
                sum += ((e.y_true - p) / e.y_true).abs();
                m.n_scored += 1;
            }
        }
    }
    (m.n_scored > 0).then(|| Mape {
        value: 100.0 * sum / m.n_scored as f64,
        ..m
    })
}

pub fn mape(log: &PredictionLog, well_id: u32) -> Result<Mape, EvalError> {
    mape_of(log.for_well(well_id)).ok_or(EvalError::NoScoreableEntries(well_id))
}

/// Percentile `p` in `[0, 100]` with linear interpolation between closest
/// ranks. Returns NaN for an empty sample.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, p)
}

fn percentile_sorted(v: &[f64], p: f64) -> f64 {
    let rank = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (rank - lo as f64) * (v[hi] - v[lo])
}

/// Rolling mean absolute error of one well: at each of its entry times `t`,
/// the mean over entries in `(t - window, t]` that carry a prediction.
pub fn rolling_mae_well(entries: &[&LogEntry], window: i64) -> Vec<(i64, Option<f64>)> {
    let scored: Vec<(i64, f64)> = entries
        .iter()
        .filter_map(|e| e.y_pred.map(|p| (e.t, (e.y_true - p).abs())))
        .collect();
    let mut prefix = Vec::with_capacity(scored.len() + 1);
    prefix.push(0.0);
    for (_, a) in &scored {
        prefix.push(prefix.last().unwrap() + a);
    }
    entries
        .iter()
        .map(|e| (e.t, window_mean(&scored, &prefix, e.t, window)))
        .collect()
}

fn window_mean(scored: &[(i64, f64)], prefix: &[f64], t: i64, window: i64) -> Option<f64> {
    let hi = scored.partition_point(|(s, _)| *s <= t);
    let lo = scored.partition_point(|(s, _)| *s <= t.saturating_sub(window));
    (hi > lo).then(|| (prefix[hi] - prefix[lo]) / (hi - lo) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingPoint {
    pub t: i64,
    /// Mean over wells of the per-well rolling error.
    pub mae: f64,
    pub p25: f64,
    pub p75: f64,
    pub n_wells: usize,
}

/// Cross-well rolling error: at each distinct entry time, the per-well rolling
/// errors are averaged and their P25/P75 reported. Times at which no well has
/// a scored entry in its window are gaps and are left out.
pub fn rolling_mae(log: &PredictionLog, window: i64) -> Vec<RollingPoint> {
    let mut per_well: Vec<(Vec<(i64, f64)>, Vec<f64>)> = Vec::new();
    for id in log.well_ids() {
        let scored: Vec<(i64, f64)> = log
            .for_well(id)
            .filter_map(|e| e.y_pred.map(|p| (e.t, (e.y_true - p).abs())))
            .collect();
        let mut prefix = vec![0.0];
        for (_, a) in &scored {
            prefix.push(prefix.last().unwrap() + a);
        }
        per_well.push((scored, prefix));
    }
    let mut times: Vec<i64> = log.entries.iter().map(|e| e.t).collect();
    times.sort_unstable();
    times.dedup();
    times
        .into_iter()
        .filter_map(|t| {
            let mut vals: Vec<f64> = per_well
                .iter()
                .filter_map(|(s, p)| window_mean(s, p, t, window))
                .collect();
            if vals.is_empty() {
                return None;
            }
            vals.sort_by(f64::total_cmp);
            Some(RollingPoint {
                t,
                mae: vals.iter().sum::<f64>() / vals.len() as f64,
                p25: percentile_sorted(&vals, 25.0),
                p75: percentile_sorted(&vals, 75.0),
                n_wells: vals.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub model: String,
    pub method: String,
    /// Percent.
    pub per_well_mape: BTreeMap<u32, f64>,
    pub cross_well_mean: f64,
    /// P10, P25, P50, P75, P90 of the per-well MAPEs.
    pub percentiles: [f64; 5],
    pub rolling: Vec<RollingPoint>,
    pub n_zero_target: usize,
    pub n_missing: usize,
}

impl MetricReport {
    /// Scores every well of `log`. Wells without scoreable entries are skipped
    /// and their entries counted as missing; an entirely unscoreable log is an
    /// error.
    pub fn from_log(log: &PredictionLog, window: i64) -> Result<Self, EvalError> {
        let mut per_well_mape = BTreeMap::new();
        let (mut zero, mut missing) = (0, 0);
        for id in log.well_ids() {
            match mape(log, id) {
                Ok(m) => {
                    per_well_mape.insert(id, m.value);
                    zero += m.n_zero_target;
                    missing += m.n_missing;
                }
                Err(_) => missing += log.for_well(id).count(),
            }
        }
        if per_well_mape.is_empty() {
            return Err(EvalError::EmptyLog);
        }
        let mut vals: Vec<f64> = per_well_mape.values().copied().collect();
        vals.sort_by(f64::total_cmp);
        Ok(Self {
            model: log.metadata.model.clone(),
            method: log.metadata.method.clone(),
            cross_well_mean: vals.iter().sum::<f64>() / vals.len() as f64,
            percentiles: PERCENTILES.map(|p| percentile_sorted(&vals, p)),
            per_well_mape,
            rolling: rolling_mae(log, window),
            n_zero_target: zero,
            n_missing: missing,
        })
    }

    pub fn write_rolling_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "rolling_mae", "p25", "p75", "n_wells"])?;
        for p in &self.rolling {
            w.write_record([
                p.t.to_string(),
                p.mae.to_string(),
                p.p25.to_string(),
                p.p75.to_string(),
                p.n_wells.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Methods by models table of cross-well mean MAPE, plus an "All" column
/// averaging every (well, model) cell of a method.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub methods: Vec<String>,
    pub models: Vec<String>,
    /// `cells[method][model]`.
    pub cells: Vec<Vec<Option<f64>>>,
    pub all: Vec<Option<f64>>,
}

pub fn summarize(reports: &[MetricReport]) -> SummaryTable {
    let mut methods: Vec<String> = Vec::new();
    let mut models: Vec<String> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
    }
    let mut cells = vec![vec![None; models.len()]; methods.len()];
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
    for r in reports {
        let i = methods.iter().position(|m| *m == r.method).unwrap();
        let j = models.iter().position(|m| *m == r.model).unwrap();
        cells[i][j] = Some(r.cross_well_mean);
        pooled[i].extend(r.per_well_mape.values());
    }
    let all = pooled
        .iter()
        .map(|v| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    SummaryTable {
        methods,
        models,
        cells,
        all,
    }
}

impl SummaryTable {
    pub fn get(&self, method: &str, model: &str) -> Option<f64> {
        let i = self.methods.iter().position(|m| m == method)?;
        let j = self.models.iter().position(|m| m == model)?;
        self.cells[i][j]
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["method".to_string()];
        header.extend(self.models.iter().cloned());
        header.push("All".into());
        w.write_record(&header)?;
        let fmt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (i, m) in self.methods.iter().enumerate() {
            let mut row = vec![m.clone()];
            row.extend(self.cells[i].iter().map(fmt));
            row.push(fmt(&self.all[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Plain-text rendering with two decimals.
    pub fn to_text(&self) -> String {
        let fmt = |v: &Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
        let mut out = format!("{:<12}", "");
        for m in self.models.iter().chain(std::iter::once(&"All".to_string())) {
            out.push_str(&format!("{m:>10}"));
        }
        out.push('\n');
        for (i, method) in self.methods.iter().enumerate() {
            out.push_str(&format!("{method:<12}"));
            for c in self.cells[i].iter().chain(std::iter::once(&self.all[i])) {
                out.push_str(&format!("{:>10}", fmt(c)));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-well MAPE rows (`model,method,well_id,mape`) for a set of reports.
pub fn write_per_well_csv(reports: &[MetricReport], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "method", "well_id", "mape"])?;
    for r in reports {
        for (id, v) in &r.per_well_mape {
            w.write_record([r.model.clone(), r.method.clone(), id.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Source;

    fn entry(t: i64, well_id: u32, y: f64, p: Option<f64>) -> LogEntry {
        LogEntry {
            t,
            well_id,
            y_true: y,
            y_pred: p,
            model_version: 0,
            source: Source::Mpfm,
        }
    }

    fn log_of(entries: Vec<LogEntry>, model: &str, method: &str) -> PredictionLog {
        let mut log = PredictionLog::new(model, method, None);
        log.entries = entries;
        log
    }

    #[test]
    fn mape_examples() {
        let log = log_of(vec![entry(0, 1, 100.0, Some(90.0)), entry(1, 1, 100.0, Some(110.0))], "LR", "OL");
        assert!((mape(&log, 1).unwrap().value - 10.0).abs() < 1e-12);
        let perfect = log_of(vec![entry(0, 1, 3.0, Some(3.0))], "LR", "OL");
        assert_eq!(mape(&perfect, 1).unwrap().value, 0.0);
    }

    #[test]
    fn mape_exclusions() {
        let log = log_of(
            vec![entry(0, 1, 0.0, Some(1.0)), entry(1, 1, 5.0, None), entry(2, 1, 4.0, Some(5.0))],
            "LR",
            "OL",
        );
        let m = mape(&log, 1).unwrap();
        assert_eq!((m.n_scored, m.n_zero_target, m.n_missing), (1, 1, 1));
        assert!((m.value - 25.0).abs() < 1e-12);
        assert!(mape(&log, 2).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 4.0);
        assert_eq!(percentile(&v, 50.0), 2.5);
        assert!((percentile(&v, 25.0) - 1.75).abs() < 1e-15);
        assert_eq!(percentile(&[7.0], 90.0), 7.0);
    }

    #[test]
    fn rolling_constant_error() {
        let entries = (0..30).map(|d| entry(d * 86_400, 1, 10.0, Some(12.0))).collect();
        let log = log_of(entries, "NN", "OL");
        let series = rolling_mae(&log, ROLLING_WINDOW);
        assert_eq!(series.len(), 30);
        assert!(series.iter().all(|p| p.mae == 2.0 && p.n_wells == 1));
    }

    #[test]
    fn rolling_window_is_half_open() {
        let log = log_of(
            vec![entry(0, 1, 0.0, Some(1.0)), entry(10, 1, 0.0, Some(3.0)), entry(20, 1, 0.0, Some(5.0))],
            "NN",
            "OL",
        );
        let s: Vec<f64> = rolling_mae(&log, 10).iter().map(|p| p.mae).collect();
        assert_eq!(s, vec![1.0, 3.0, 5.0]);
        let s: Vec<f64> = rolling_mae(&log, 11).iter().map(|p| p.mae).collect();
        assert_eq!(s, vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn summary_shape_and_all_column() {
        let a = log_of(vec![entry(0, 1, 100.0, Some(96.0)), entry(0, 2, 100.0, Some(106.0))], "LR", "OL");
        let ra = MetricReport::from_log(&a, ROLLING_WINDOW).unwrap();
        assert!((ra.cross_well_mean - 5.0).abs() < 1e-12);
        let b = log_of(vec![entry(0, 1, 100.0, Some(98.0)), entry(0, 2, 100.0, Some(98.0))], "NN", "OL");
        let rb = MetricReport::from_log(&b, ROLLING_WINDOW).unwrap();
        let table = summarize(&[ra, rb]);
        assert_eq!(table.methods, vec!["OL"]);
        assert_eq!(table.models, vec!["LR", "NN"]);
        assert!((table.all[0].unwrap() - 3.5).abs() < 1e-12);
        assert!((table.get("OL", "NN").unwrap() - 2.0).abs() < 1e-12);
        assert!(table.to_text().contains("All"));
    }
}

//! Observations, per-well datasets, chronological splitting, CSV ingestion and
//! feature standardization.
//!
//! Units are SI throughout: pressures in Pa, temperatures in K, flow rates in
//! Sm³/h. Phase fractions are volumetric fractions at standard conditions.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of explanatory variables per observation.
pub const N_FEATURES: usize = 6;

/// Column index of each explanatory variable in [`Observation::x`].
pub mod feature {
    pub const CHOKE: usize = 0;
    pub const P_UPSTREAM: usize = 1;
    pub const P_DOWNSTREAM: usize = 2;
    pub const T_UPSTREAM: usize = 3;
    pub const ETA_OIL: usize = 4;
    pub const ETA_GAS: usize = 5;

    pub const NAMES: [&str; super::N_FEATURES] = ["u", "p1", "p2", "T1", "eta_oil", "eta_gas"];
}

/// The CSV header used for ingestion and export.
pub const CSV_COLUMNS: [&str; 10] = [
    "well_id", "t", "u", "p1", "p2", "T1", "eta_oil", "eta_gas", "q_total", "source",
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("no valid observations in {0}")]
    EmptyDataset(String),
    #[error("observation for well {found} inserted into dataset of well {expected}")]
    WellMismatch { expected: u32, found: u32 },
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
}

/// Origin of the flow-rate measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "MPFM")]
    Mpfm,
    #[serde(rename = "WellTest")]
    WellTest,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Mpfm => f.write_str("MPFM"),
            Source::WellTest => f.write_str("WellTest"),
        }
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mpfm" => Ok(Source::Mpfm),
            "welltest" | "well_test" | "well-test" => Ok(Source::WellTest),
            other => Err(format!("unknown source `{other}`")),
        }
    }
}

/// One timestamped sample of a well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Seconds since the Unix epoch.
    pub t: i64,
    /// `(u, p1, p2, T1, eta_oil, eta_gas)`.
    pub x: [f64; N_FEATURES],
    /// Total volumetric flow rate in Sm³/h.
    pub y: f64,
    pub source: Source,
    pub well_id: u32,
}

impl Observation {
    /// Water fraction, `1 - eta_oil - eta_gas` clamped at zero.
    pub fn eta_wat(&self) -> f64 {
        water_fraction(&self.x)
    }

    /// Checks the physical validity rules, returning the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let [u, p1, p2, t1, eo, eg] = self.x;
        if self.x.iter().any(|v| !v.is_finite()) || !self.y.is_finite() {
            return Err("non-finite value".into());
        }
        if !(0.0..=1.0).contains(&u) {
            return Err(format!("choke opening {u} outside [0, 1]"));
        }
        if p1 <= 0.0 {
            return Err(format!("upstream pressure {p1} not positive"));
        }
        if p2 <= 0.0 {
            return Err(format!("downstream pressure {p2} not positive"));
        }
        if t1 <= 0.0 {
            return Err(format!("upstream temperature {t1} not positive"));
        }
        if eo < 0.0 || eg < 0.0 {
            return Err("negative phase fraction".into());
        }
        if eo + eg > 1.0 + 1e-12 {
            return Err(format!("eta_oil + eta_gas = {} exceeds 1", eo + eg));
        }
        if self.y < 0.0 {
            return Err(format!("negative flow rate {}", self.y));
        }
        if self.well_id == 0 {
            return Err("well_id must be >= 1".into());
        }
        Ok(())
    }
}

pub(crate) fn water_fraction(x: &[f64; N_FEATURES]) -> f64 {
    (1.0 - x[feature::ETA_OIL] - x[feature::ETA_GAS]).max(0.0)
}

/// Chronologically ordered observations of a single well.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WellDataset {
    pub well_id: u32,
    observations: Vec<Observation>,
}

impl WellDataset {
    /// Builds a dataset, sorting by time (stable, so equal timestamps keep
    /// their input order).
    pub fn new(well_id: u32, mut observations: Vec<Observation>) -> Result<Self, DataError> {
        if let Some(o) = observations.iter().find(|o| o.well_id != well_id) {
            return Err(DataError::WellMismatch {
                expected: well_id,
                found: o.well_id,
            });
        }
        observations.sort_by_key(|o| o.t);
        Ok(Self {
            well_id,
            observations,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn into_observations(self) -> Vec<Observation> {
        self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Keeps only observations from `source`.
    pub fn filter_source(&self, source: Source) -> WellDataset {
        WellDataset {
            well_id: self.well_id,
            observations: self
                .observations
                .iter()
                .filter(|o| o.source == source)
                .copied()
                .collect(),
        }
    }
}

/// Why a chronological split is lopsided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitFlag {
    EmptyTrain,
    EmptyTest,
}

/// Training part strictly before `split_time`, test part at or after it.
///
/// The parts are plain chronological streams so that several wells can be
/// merged into one split (see [`DataSplit::merge`]).
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Vec<Observation>,
    pub test: Vec<Observation>,
    pub split_time: i64,
    pub flag: Option<SplitFlag>,
}

impl DataSplit {
    /// Merges per-well splits into one chronological stream (stable by well
    /// order for equal timestamps).
    pub fn merge(splits: &[DataSplit]) -> DataSplit {
        let mut train: Vec<Observation> =
            splits.iter().flat_map(|s| s.train.iter().copied()).collect();
        let mut test: Vec<Observation> =
            splits.iter().flat_map(|s| s.test.iter().copied()).collect();
        train.sort_by_key(|o| (o.t, o.well_id));
        test.sort_by_key(|o| (o.t, o.well_id));
        let split_time = splits.iter().map(|s| s.split_time).min().unwrap_or(0);
        let flag = if train.is_empty() {
            Some(SplitFlag::EmptyTrain)
        } else if test.is_empty() {
            Some(SplitFlag::EmptyTest)
        } else {
            None
        };
        DataSplit {
            train,
            test,
            split_time,
            flag,
        }
    }

    /// Keeps only observations from `source` on both sides.
    pub fn filter_source(&self, source: Source) -> DataSplit {
        let keep = |v: &[Observation]| -> Vec<Observation> {
            v.iter().filter(|o| o.source == source).copied().collect()
        };
        let train = keep(&self.train);
        let test = keep(&self.test);
        let flag = if train.is_empty() {
            Some(SplitFlag::EmptyTrain)
        } else if test.is_empty() {
            Some(SplitFlag::EmptyTest)
        } else {
            None
        };
        DataSplit {
            train,
            test,
            split_time: self.split_time,
            flag,
        }
    }
}

/// Splits `ds` at `split_time`; a lopsided split is allowed but flagged.
pub fn chronological_split(ds: &WellDataset, split_time: i64) -> DataSplit {
    let cut = ds.observations.partition_point(|o| o.t < split_time);
    let (train, test) = ds.observations.split_at(cut);
    let flag = if train.is_empty() {
        Some(SplitFlag::EmptyTrain)
    } else if test.is_empty() {
        Some(SplitFlag::EmptyTest)
    } else {
        None
    };
    DataSplit {
        train: train.to_vec(),
        test: test.to_vec(),
        split_time,
        flag,
    }
}

/// Per-feature standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: [f64; N_FEATURES],
    pub std: [f64; N_FEATURES],
}

impl Default for FeatureScaler {
    fn default() -> Self {
        Self::identity()
    }
}

impl FeatureScaler {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; N_FEATURES],
            std: [1.0; N_FEATURES],
        }
    }

    /// Fits population mean and std; zero-variance columns get std 1.
    pub fn fit<'a, I>(observations: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Observation>,
    {
        let xs: Vec<&[f64; N_FEATURES]> = observations.into_iter().map(|o| &o.x).collect();
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mut mean = [0.0; N_FEATURES];
        for x in &xs {
            for (m, v) in mean.iter_mut().zip(x.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = [0.0; N_FEATURES];
        for x in &xs {
            for i in 0..N_FEATURES {
                let d = x[i] - mean[i];
                std[i] += d * d;
            }
        }
        for s in std.iter_mut() {
            *s = (*s / n).sqrt();
            if !(*s > 0.0) {
                *s = 1.0;
            }
        }
        Some(Self { mean, std })
    }

    pub fn apply(&self, x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for i in 0..N_FEATURES {
            out[i] = (x[i] - self.mean[i]) / self.std[i];
        }
        out
    }

    pub fn unapply(&self, z: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for i in 0..N_FEATURES {
            out[i] = z[i] * self.std[i] + self.mean[i];
        }
        out
    }
}

/// Affine output scaling `y = mean + std * net` used by the data-driven
/// models; identity by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub mean: f64,
    pub std: f64,
}

impl Default for TargetScale {
    fn default() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
        }
    }
}

impl TargetScale {
    pub fn fit<'a, I>(observations: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Observation>,
    {
        let ys: Vec<f64> = observations.into_iter().map(|o| o.y).collect();
        if ys.is_empty() {
            return None;
        }
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let mut std = var.sqrt();
        if !(std > 0.0) {
            std = if mean.abs() > 0.0 { mean.abs() } else { 1.0 };
        }
        Some(Self { mean, std })
    }
}

/// One rejected CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    /// 1-based line number in the file (header is line 1).
    pub line: usize,
    pub reason: String,
    pub raw: String,
}

/// Result of [`ingest_csv`].
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub datasets: Vec<WellDataset>,
    pub rejected: Vec<RejectedRow>,
}

impl IngestReport {
    pub fn reject_count(&self) -> usize {
        self.rejected.len()
    }
}

fn parse_timestamp_iso(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

/// Reads a well CSV (see [`CSV_COLUMNS`]), drops rows that violate the
/// observation rules and writes a `<input>.rejects.csv` sidecar.
///
/// The `t` column is auto-detected: integer epoch seconds when every row
/// parses as an integer, ISO-8601 otherwise.
pub fn ingest_csv(path: &Path) -> Result<IngestReport, DataError> {
    let report = read_csv(path)?;
    let sidecar = rejects_path(path);
    write_rejects(&sidecar, &report.rejected)?;
    if report.datasets.is_empty() {
        return Err(DataError::EmptyDataset(path.display().to_string()));
    }
    Ok(report)
}

/// Path of the reject sidecar for `input`.
pub fn rejects_path(input: &Path) -> PathBuf {
    let mut s = input.as_os_str().to_owned();
    s.push(".rejects.csv");
    PathBuf::from(s)
}

fn read_csv(path: &Path) -> Result<IngestReport, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let mut idx = [0usize; 10];
    for (slot, name) in idx.iter_mut().zip(CSV_COLUMNS.iter()) {
        *slot = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| DataError::MissingColumn((*name).to_string()))?;
    }

    let records: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;
    let epoch_mode = records
        .iter()
        .all(|r| r.get(idx[1]).map(|s| s.parse::<i64>().is_ok()).unwrap_or(false));

    let mut rejected = Vec::new();
    let mut by_well: BTreeMap<u32, Vec<Observation>> = BTreeMap::new();
    for (i, rec) in records.iter().enumerate() {
        let line = i + 2;
        let raw = rec.iter().collect::<Vec<_>>().join(",");
        match parse_row(rec, &idx, epoch_mode) {
            Ok(obs) => match obs.validate() {
                Ok(()) => by_well.entry(obs.well_id).or_default().push(obs),
                Err(reason) => rejected.push(RejectedRow { line, reason, raw }),
            },
            Err(reason) => rejected.push(RejectedRow { line, reason, raw }),
        }
    }
    let datasets = by_well
        .into_iter()
        .map(|(id, obs)| WellDataset::new(id, obs))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IngestReport { datasets, rejected })
}

fn parse_row(rec: &csv::StringRecord, idx: &[usize; 10], epoch_mode: bool) -> Result<Observation, String> {
    let field = |k: usize| rec.get(idx[k]).ok_or_else(|| format!("missing field `{}`", CSV_COLUMNS[k]));
    let num = |k: usize| -> Result<f64, String> {
        let s = field(k)?;
        s.parse::<f64>()
            .map_err(|_| format!("unparseable {} `{}`", CSV_COLUMNS[k], s))
    };
    let well_id = field(0)?
        .parse::<u32>()
        .map_err(|_| format!("unparseable well_id `{}`", rec.get(idx[0]).unwrap_or("")))?;
    let t_raw = field(1)?;
    let t = if epoch_mode {
        t_raw.parse::<i64>().map_err(|_| format!("unparseable t `{t_raw}`"))?
    } else {
        parse_timestamp_iso(t_raw).ok_or_else(|| format!("unparseable t `{t_raw}`"))?
    };
    let mut x = [0.0; N_FEATURES];
    for (j, v) in x.iter_mut().enumerate() {
        *v = num(2 + j)?;
    }
    let y = num(8)?;
    let source = field(9)?.parse::<Source>()?;
    Ok(Observation {
        t,
        x,
        y,
        source,
        well_id,
    })
}

fn write_rejects(path: &Path, rejected: &[RejectedRow]) -> Result<(), DataError> {
    let file = File::create(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["line", "reason", "raw"])?;
    for r in rejected {
        w.write_record([r.line.to_string(), r.reason.clone(), r.raw.clone()])?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Writes observations in the ingestion format with integer epoch times.
/// Floats use the shortest representation that parses back bit-exactly.
pub fn write_csv<'a, I>(path: &Path, observations: I) -> Result<(), DataError>
where
    I: IntoIterator<Item = &'a Observation>,
{
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", CSV_COLUMNS.join(",")).map_err(io_err)?;
    for o in observations {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            o.well_id, o.t, o.x[0], o.x[1], o.x[2], o.x[3], o.x[4], o.x[5], o.y, o.source
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(t: i64, y: f64) -> Observation {
        Observation {
            t,
            x: [0.5, 150e5, 100e5, 350.0, 0.3, 0.6],
            y,
            source: Source::Mpfm,
            well_id: 1,
        }
    }

    fn ds(ts: &[i64]) -> WellDataset {
        WellDataset::new(1, ts.iter().map(|&t| obs(t, 10.0)).collect()).unwrap()
    }

    #[test]
    fn split_at_last_timestamp() {
        let s = chronological_split(&ds(&[1, 2, 3]), 3);
        assert_eq!(s.train.iter().map(|o| o.t).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(s.test.iter().map(|o| o.t).collect::<Vec<_>>(), vec![3]);
        assert_eq!(s.flag, None);
    }

    #[test]
    fn split_before_first_and_after_last() {
        let s = chronological_split(&ds(&[1, 2, 3]), 0);
        assert!(s.train.is_empty());
        assert_eq!(s.test.len(), 3);
        assert_eq!(s.flag, Some(SplitFlag::EmptyTrain));

        let s = chronological_split(&ds(&[1, 2, 3]), 10);
        assert!(s.test.is_empty());
        assert_eq!(s.flag, Some(SplitFlag::EmptyTest));
    }

    #[test]
    fn scaler_hand_values() {
        let mut a = obs(0, 1.0);
        let mut b = obs(1, 1.0);
        a.x[0] = 0.0;
        b.x[0] = 2.0;
        let s = FeatureScaler::fit([&a, &b]).unwrap();
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.std[0], 1.0);
        assert_eq!(s.apply(&b.x)[0], 1.0);
        // constant columns get std 1 and scale to 0
        assert_eq!(s.std[1], 1.0);
        assert_eq!(s.apply(&b.x)[1], 0.0);
    }

    #[test]
    fn identity_scaler_is_noop() {
        let o = obs(0, 1.0);
        assert_eq!(FeatureScaler::identity().apply(&o.x), o.x);
    }

    #[test]
    fn validate_rules() {
        let mut o = obs(0, 1.0);
        assert!(o.validate().is_ok());
        o.x[1] = -5.0;
        assert!(o.validate().is_err());
        let mut o = obs(0, 1.0);
        o.x[4] = 0.6;
        assert!(o.validate().is_err());
        let mut o = obs(0, -1.0);
        o.y = -1.0;
        assert!(o.validate().is_err());
    }

    #[test]
    fn dataset_rejects_foreign_well() {
        let mut o = obs(0, 1.0);
        o.well_id = 2;
        assert!(matches!(
            WellDataset::new(1, vec![o]),
            Err(DataError::WellMismatch { .. })
        ));
    }

    #[test]
    fn iso_timestamps() {
        assert_eq!(parse_timestamp_iso("1970-01-02"), Some(86400));
        assert_eq!(parse_timestamp_iso("1970-01-01T00:01:00Z"), Some(60));
        assert_eq!(parse_timestamp_iso("1970-01-01 00:00:10"), Some(10));
        assert_eq!(parse_timestamp_iso("yesterday"), None);
    }
}

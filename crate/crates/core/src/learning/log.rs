use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LearningError, ScheduleConfig};
use crate::data::Source;

/// One prequential prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub t: i64,
    pub well_id: u32,
    pub y_true: f64,
    /// `None` when no prediction could be made (benchmark without history,
    /// or a failed forward pass).
    pub y_pred: Option<f64>,
    pub model_version: u64,
    pub source: Source,
}

/// A periodic refit attempted by the batch driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainEvent {
    pub t: i64,
    pub n_train: usize,
    /// Version in force after the event.
    pub version: u64,
    /// `None` when the refit failed and the previous model was kept.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LogMetadata {
    pub model: String,
    pub method: String,
    pub schedule: Option<ScheduleConfig>,
    pub retrains: Vec<RetrainEvent>,
    /// Timestamps whose online update was skipped because it failed.
    pub skipped_updates: Vec<i64>,
    pub failed_predictions: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionLog {
    pub entries: Vec<LogEntry>,
    pub metadata: LogMetadata,
}

const HEADER: [&str; 6] = ["t", "well_id", "y_true", "y_pred", "model_version", "source"];

impl PredictionLog {
    pub fn new(model: &str, method: &str, schedule: Option<ScheduleConfig>) -> Self {
        Self {
            entries: Vec::new(),
            metadata: LogMetadata {
                model: model.to_string(),
                method: method.to_string(),
                schedule,
                ..LogMetadata::default()
            },
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn well_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.entries.iter().map(|e| e.well_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn for_well(&self, well_id: u32) -> impl Iterator<Item = &LogEntry> {
        self.entries.iter().filter(move |e| e.well_id == well_id)
    }

    /// Concatenates logs of the same model and method and restores
    /// chronological order (stable on ties, then by well).
    pub fn merge(logs: Vec<PredictionLog>) -> PredictionLog {
        let mut out = PredictionLog::default();
        for (i, log) in logs.into_iter().enumerate() {
            if i == 0 {
                out.metadata = log.metadata.clone();
            } else {
                out.metadata.retrains.extend(log.metadata.retrains);
                out.metadata.skipped_updates.extend(log.metadata.skipped_updates);
                out.metadata.failed_predictions += log.metadata.failed_predictions;
            }
            out.entries.extend(log.entries);
        }
        out.entries.sort_by_key(|e| (e.t, e.well_id));
        out
    }

    /// Path of the JSON metadata sidecar next to `csv_path`.
    pub fn metadata_path(csv_path: &Path) -> PathBuf {
        let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("log");
        csv_path.with_file_name(format!("{stem}.meta.json"))
    }

    /// Writes the CSV and its metadata sidecar.
    pub fn write(&self, csv_path: &Path) -> Result<(), LearningError> {
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(HEADER)?;
        for e in &self.entries {
            w.write_record([
                e.t.to_string(),
                e.well_id.to_string(),
                e.y_true.to_string(),
                e.y_pred.map(|y| y.to_string()).unwrap_or_default(),
                e.model_version.to_string(),
                e.source.to_string(),
            ])?;
        }
        w.flush()?;
        let mut f = std::fs::File::create(Self::metadata_path(csv_path))?;
        serde_json::to_writer_pretty(&mut f, &self.metadata)?;
        writeln!(f)?;
        Ok(())
    }

    /// Reads a log written by [`PredictionLog::write`]; the sidecar is
    /// optional.
    pub fn read(csv_path: &Path) -> Result<PredictionLog, LearningError> {
        let mut r = csv::Reader::from_path(csv_path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != HEADER {
            return Err(LearningError::Malformed(format!("unexpected header {header:?}")));
        }
        let mut entries = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| LearningError::Malformed(format!("row {}: bad {what}", i + 2));
            let y_pred = match &rec[3] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("y_pred"))?),
            };
            entries.push(LogEntry {
                t: rec[0].parse().map_err(|_| bad("t"))?,
                well_id: rec[1].parse().map_err(|_| bad("well_id"))?,
                y_true: rec[2].parse().map_err(|_| bad("y_true"))?,
                y_pred,
                model_version: rec[4].parse().map_err(|_| bad("model_version"))?,
                source: rec[5].parse().map_err(|_| bad("source"))?,
            });
        }
        let meta_path = Self::metadata_path(csv_path);
        let metadata = if meta_path.exists() {
            serde_json::from_reader(std::fs::File::open(meta_path)?)?
        } else {
            LogMetadata::default()
        };
        Ok(PredictionLog { entries, metadata })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nn_ol.csv");
        let mut log = PredictionLog::new("NN", "OL", None);
        log.entries.push(LogEntry {
            t: 10,
            well_id: 2,
            y_true: 0.1 + 0.2,
            y_pred: Some(1.0 / 3.0),
            model_version: 7,
            source: Source::WellTest,
        });
        log.entries.push(LogEntry {
            t: 11,
            well_id: 2,
            y_true: 5.0,
            y_pred: None,
            model_version: 7,
            source: Source::Mpfm,
        });
        log.metadata.skipped_updates.push(11);
        log.write(&path).unwrap();
        assert!(dir.path().join("nn_ol.meta.json").exists());
        let back = PredictionLog::read(&path).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn merge_sorts_chronologically() {
        let e = |t, w| LogEntry {
            t,
            well_id: w,
            y_true: 1.0,
            y_pred: Some(1.0),
            model_version: 0,
            source: Source::Mpfm,
        };
        let a = PredictionLog {
            entries: vec![e(1, 1), e(5, 1)],
            ..Default::default()
        };
        let b = PredictionLog {
            entries: vec![e(1, 2), e(3, 2)],
            ..Default::default()
        };
        let m = PredictionLog::merge(vec![a, b]);
        let order: Vec<(i64, u32)> = m.entries.iter().map(|e| (e.t, e.well_id)).collect();
        assert_eq!(order, vec![(1, 1), (1, 2), (3, 2), (5, 1)]);
        assert_eq!(m.well_ids(), vec![1, 2]);
    }
}

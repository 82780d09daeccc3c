//! Input-distribution shift detection with Hotelling's T² and the
//! update-frequency scan.

pub mod fdist;
mod hotelling;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fdist::{f_cdf, f_quantile};
pub use hotelling::{hotelling_t2, hotelling_t2_named, mean_cov};

use crate::data::{feature, Observation, N_FEATURES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriftError {
    #[error("too few observations: need {needed}, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("samples have different dimensions")]
    DimensionMismatch,
    #[error("scatter matrix is singular along feature `{0}`")]
    Degenerate(String),
    #[error("invalid drift config: {0}")]
    InvalidConfig(&'static str),
    #[error("io: {0}")]
    Io(String),
}

/// How the Hotelling statistic is turned into an F statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FScaling {
    /// Compare `HT²` itself to the F quantile.
    Raw,
    /// `F = HT² (N1 + N2 - d - 1) / (d (N1 + N2 - 2))`.
    #[default]
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftConfig {
    pub alpha: f64,
    /// Consecutive rejections needed before a shift is declared.
    pub confirm_count: usize,
    pub scaling: FScaling,
    /// Width of the second sample; `None` tests single observations.
    pub d2_window: Option<usize>,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            confirm_count: 3,
            scaling: FScaling::Scaled,
            d2_window: None,
        }
    }
}

impl DriftConfig {
    pub fn validate(&self) -> Result<(), DriftError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DriftError::InvalidConfig("alpha must lie in (0, 1)"));
        }
        if self.confirm_count == 0 {
            return Err(DriftError::InvalidConfig("confirm_count must be at least 1"));
        }
        if self.d2_window == Some(0) {
            return Err(DriftError::InvalidConfig("d2_window must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftPoint {
    pub t: i64,
    pub ht2: f64,
    pub f_stat: f64,
    pub f_crit: f64,
    /// The test rejected at this point.
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftReport {
    /// Start of the scan (end of the reference sample).
    pub t1: i64,
    pub n_reference: usize,
    pub points: Vec<ShiftPoint>,
    /// Index into `points` where the first confirmed run starts.
    pub confirmed_at: Option<usize>,
    /// Seconds from `t1` to the start of the first confirmed run.
    pub estimated_tau: Option<i64>,
}

impl ShiftReport {
    pub fn detection_rate(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().filter(|p| p.detected).count() as f64 / self.points.len() as f64
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DriftError> {
        let io = |e: csv::Error| DriftError::Io(e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["t", "HT2", "F_stat", "F_crit", "detected"]).map_err(io)?;
        for p in &self.points {
            w.write_record([
                p.t.to_string(),
                p.ht2.to_string(),
                p.f_stat.to_string(),
                p.f_crit.to_string(),
                p.detected.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| DriftError::Io(e.to_string()))
    }
}

/// Splits `train` at `t1 = t_first + t1_fraction (t_last - t_first)` and tests
/// every later observation against the reference sample before `t1`.
///
/// A shift is confirmed once `confirm_count` consecutive points reject; the
/// estimated period is the time from `t1` to the first point of that run.
pub fn estimate_update_frequency(
    train: &[Observation],
    t1_fraction: f64,
    cfg: &DriftConfig,
) -> Result<ShiftReport, DriftError> {
    cfg.validate()?;
    if !(0.0..1.0).contains(&t1_fraction) {
        return Err(DriftError::InvalidConfig("t1_fraction must lie in [0, 1)"));
    }
    let d = N_FEATURES;
    let (Some(first), Some(last)) = (train.first(), train.last()) else {
        return Err(DriftError::TooFewObservations { needed: d + 2, got: 0 });
    };
    let t1 = first.t + (t1_fraction * (last.t - first.t) as f64).round() as i64;
    let n1 = train.partition_point(|o| o.t < t1);
    if n1 < d + 2 {
        return Err(DriftError::TooFewObservations { needed: d + 2, got: n1 });
    }
    let rows: Vec<[f64; N_FEATURES]> = train.iter().map(|o| o.x).collect();
    let reference = &rows[..n1];

    let points = (n1..rows.len())
        .into_par_iter()
        .map(|k| {
            let lo = match cfg.d2_window {
                Some(w) => (k + 1).saturating_sub(w).max(n1),
                None => k,
            };
            let sample = &rows[lo..=k];
            let ht2 = hotelling_t2_named(reference, sample, &feature::NAMES)?;
            let n = n1 + sample.len();
            let df2 = (n - d - 1) as u32;
            let f_stat = match cfg.scaling {
                FScaling::Raw => ht2,
                FScaling::Scaled => ht2 * df2 as f64 / (d as f64 * (n - 2) as f64),
            };
            let f_crit = f_quantile(1.0 - cfg.alpha, d as u32, df2);
            Ok(ShiftPoint {
                t: train[k].t,
                ht2,
                f_stat,
                f_crit,
                detected: f_stat > f_crit,
            })
        })
        .collect::<Result<Vec<_>, DriftError>>()?;

    let mut run = 0;
    let mut confirmed_at = None;
    for (i, p) in points.iter().enumerate() {
        run = if p.detected { run + 1 } else { 0 };
        if run == cfg.confirm_count {
            confirmed_at = Some(i + 1 - run);
            break;
        }
    }
    Ok(ShiftReport {
        t1,
        n_reference: n1,
        estimated_tau: confirmed_at.map(|i| points[i].t - t1),
        confirmed_at,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Source;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    const DAY: i64 = 86_400;

    fn gaussian_stream(n: usize, seed: u64, jump: Option<(usize, f64)>) -> Vec<Observation> {
        let mut r = rng::stream(seed, "test");
        (0..n)
            .map(|i| {
                let mut x = [0.0; N_FEATURES];
                for v in x.iter_mut() {
                    *v = StandardNormal.sample(&mut r);
                }
                if let Some((at, size)) = jump {
                    if i >= at {
                        x[1] += size;
                    }
                }
                Observation {
                    t: i as i64 * DAY,
                    x,
                    y: 1.0,
                    source: Source::Mpfm,
                    well_id: 1,
                }
            })
            .collect()
    }

    #[test]
    fn constant_stream_never_detects() {
        let obs: Vec<Observation> = (0..60)
            .map(|i| Observation {
                t: i * DAY,
                x: [0.5, 150e5, 100e5, 350.0, 0.3, 0.6],
                y: 1.0,
                source: Source::Mpfm,
                well_id: 1,
            })
            .collect();
        let rep = estimate_update_frequency(&obs, 0.5, &DriftConfig::default()).unwrap();
        assert_eq!(rep.estimated_tau, None);
        assert!(rep.points.iter().all(|p| p.ht2 == 0.0 && !p.detected));
    }

    #[test]
    fn mean_jump_is_dated() {
        // reference 200 days, jump 50 days after t1
        let obs = gaussian_stream(400, 3, Some((250, 6.0)));
        let rep = estimate_update_frequency(&obs, 0.5, &DriftConfig::default()).unwrap();
        assert_eq!(rep.t1, 200 * DAY - DAY / 2);
        let tau = rep.estimated_tau.unwrap() as f64 / DAY as f64;
        assert!((50.0..=53.0).contains(&tau), "{tau}");
    }

    #[test]
    fn false_positive_rate_near_alpha() {
        let cfg = DriftConfig {
            confirm_count: 1,
            ..DriftConfig::default()
        };
        let obs = gaussian_stream(2000, 11, None);
        let rep = estimate_update_frequency(&obs, 0.5, &cfg).unwrap();
        let rate = rep.detection_rate();
        assert!((0.02..=0.09).contains(&rate), "{rate}");
    }

    #[test]
    fn raw_scaling_rejects_less() {
        let obs = gaussian_stream(300, 5, Some((200, 1.0)));
        let raw = DriftConfig {
            scaling: FScaling::Raw,
            confirm_count: 1,
            ..DriftConfig::default()
        };
        let scaled = DriftConfig {
            confirm_count: 1,
            ..DriftConfig::default()
        };
        let a = estimate_update_frequency(&obs, 0.5, &raw).unwrap();
        let b = estimate_update_frequency(&obs, 0.5, &scaled).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            assert_eq!(p.ht2, q.ht2);
            assert!(q.f_stat <= p.f_stat);
        }
    }

    #[test]
    fn sliding_window_sample() {
        let obs = gaussian_stream(120, 8, None);
        let cfg = DriftConfig {
            d2_window: Some(10),
            ..DriftConfig::default()
        };
        let rep = estimate_update_frequency(&obs, 0.5, &cfg).unwrap();
        assert_eq!(rep.points.len(), 120 - rep.n_reference);
    }

    #[test]
    fn too_short_reference() {
        let obs = gaussian_stream(10, 1, None);
        assert!(matches!(
            estimate_update_frequency(&obs, 0.5, &DriftConfig::default()),
            Err(DriftError::TooFewObservations { .. })
        ));
    }

    #[test]
    fn report_csv_columns() {
        let obs = gaussian_stream(40, 2, None);
        let rep = estimate_update_frequency(&obs, 0.5, &DriftConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shift.csv");
        rep.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,HT2,F_stat,F_crit,detected");
        assert_eq!(text.lines().count(), rep.points.len() + 1);
    }
}

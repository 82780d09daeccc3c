//! Passive learning drivers: periodic batch learning (fresh refits every
//! period) and online learning (a few warm-started steps per arrival), both
//! evaluated prequentially.

mod drivers;
mod log;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Observation;
use crate::models::{init_model, ModelConfig, ModelError, ModelSpec};
use crate::optim::{fit_map, EarlyStoppingConfig, LossSpec, OptimError, OptimizerConfig, PriorMode};

pub use drivers::{run_benchmark, run_ol, run_pbl};
pub use log::{LogEntry, LogMetadata, PredictionLog, RetrainEvent};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("schedule mismatch: {0}")]
    WrongMode(&'static str),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("empty training data")]
    EmptyTraining,
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed prediction log: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningMode {
    /// Refit from the prior every `period_days` (may be `inf`).
    Pbl { period_days: f64 },
    /// `steps` optimizer steps per arriving observation (`0` freezes the model).
    Ol { steps: usize },
}

/// Which past observations a batch refit sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    AllHistory,
    SlidingDays(f64),
}

/// Noise level and priors of the MAP objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// `sigma_eps` as a fraction of the mean training target.
    pub relative_noise: f64,
    /// Absolute `sigma_eps`; overrides `relative_noise` when set.
    pub noise_std: Option<f64>,
    pub prior_mode: PriorMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            relative_noise: 0.05,
            noise_std: None,
            prior_mode: PriorMode::Full,
        }
    }
}

impl LossConfig {
    pub fn resolve(&self, data: &[Observation]) -> Result<LossSpec, OptimError> {
        match self.noise_std {
            Some(s) => {
                let spec = LossSpec {
                    noise_std: s,
                    prior_mode: self.prior_mode,
                };
                spec.validate()?;
                Ok(spec)
            }
            None => LossSpec::relative(data, self.relative_noise, self.prior_mode),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub mode: LearningMode,
    #[serde(default = "default_window")]
    pub window: Window,
    #[serde(default)]
    pub ocfg: OptimizerConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub early_stopping: EarlyStoppingConfig,
}

fn default_window() -> Window {
    Window::AllHistory
}

impl ScheduleConfig {
    pub fn pbl(period_days: f64, ocfg: OptimizerConfig) -> Self {
        Self {
            mode: LearningMode::Pbl { period_days },
            window: Window::AllHistory,
            ocfg,
            loss: LossConfig::default(),
            early_stopping: EarlyStoppingConfig::default(),
        }
    }

    pub fn ol(steps: usize, ocfg: OptimizerConfig) -> Self {
        Self {
            mode: LearningMode::Ol { steps },
            window: Window::AllHistory,
            ocfg,
            loss: LossConfig::default(),
            early_stopping: EarlyStoppingConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), LearningError> {
        match self.mode {
            LearningMode::Pbl { period_days } if !(period_days > 0.0) => {
                return Err(LearningError::InvalidSchedule(format!(
                    "PBL period must be positive, got {period_days}"
                )))
            }
            _ => {}
        }
        if let Window::SlidingDays(d) = self.window {
            if !(d > 0.0) {
                return Err(LearningError::InvalidSchedule("window length must be positive".into()));
            }
        }
        self.ocfg.validate()?;
        self.early_stopping.validate()?;
        Ok(())
    }

    /// Short human-readable label, e.g. `PBL 14d` or `OL k=20`.
    pub fn label(&self) -> String {
        match self.mode {
            LearningMode::Pbl { period_days } if period_days.is_infinite() => "PBL inf".to_string(),
            LearningMode::Pbl { period_days } => format!("PBL {period_days}d"),
            LearningMode::Ol { steps } => format!("OL k={steps}"),
        }
    }
}

/// Period in seconds; `None` for an infinite period.
pub(crate) fn days_to_seconds(days: f64) -> Option<i64> {
    if days.is_finite() {
        Some((days * SECONDS_PER_DAY as f64).round().max(1.0) as i64)
    } else {
        None
    }
}

/// Observations of `data` inside the window ending just before `end`.
pub(crate) fn windowed(data: &[Observation], window: Window, end: i64) -> &[Observation] {
    match window {
        Window::AllHistory => data,
        Window::SlidingDays(d) => {
            let start = end.saturating_sub((d * SECONDS_PER_DAY as f64).round() as i64);
            let i = data.partition_point(|o| o.t < start);
            &data[i..]
        }
    }
}

/// Fresh MAP fit from prior initialization: new parameters from `config`,
/// scaling fitted on `data`, then [`fit_map`] with the schedule's optimizer.
pub fn fit_fresh(
    config: &ModelConfig,
    data: &[Observation],
    schedule: &ScheduleConfig,
) -> Result<ModelSpec, LearningError> {
    if data.is_empty() {
        return Err(LearningError::EmptyTraining);
    }
    let mut m = init_model(config);
    m.calibrate_scaling(data);
    let loss = schedule.loss.resolve(data)?;
    Ok(fit_map(&m, data, &loss, &schedule.ocfg, &schedule.early_stopping)?.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_toml_roundtrip() {
        let s = ScheduleConfig {
            window: Window::SlidingDays(365.0),
            ..ScheduleConfig::pbl(14.0, OptimizerConfig::default())
        };
        let text = toml::to_string(&s).unwrap();
        let back: ScheduleConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, s);
        let inf: ScheduleConfig = toml::from_str("mode = { pbl = { period_days = inf } }").unwrap();
        assert_eq!(inf.label(), "PBL inf");
        let ol: ScheduleConfig = toml::from_str("mode = { ol = { steps = 20 } }").unwrap();
        assert_eq!(ol.label(), "OL k=20");
    }

    #[test]
    fn invalid_period_rejected() {
        assert!(ScheduleConfig::pbl(0.0, OptimizerConfig::default()).validate().is_err());
        assert!(ScheduleConfig::pbl(f64::INFINITY, OptimizerConfig::default()).validate().is_ok());
    }

    #[test]
    fn period_conversion() {
        assert_eq!(days_to_seconds(14.0), Some(14 * SECONDS_PER_DAY));
        assert_eq!(days_to_seconds(f64::INFINITY), None);
    }
}

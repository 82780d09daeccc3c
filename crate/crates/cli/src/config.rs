//! Study configuration (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vfm_core::drift::DriftConfig;
use vfm_core::learning::{LossConfig, SECONDS_PER_DAY};
use vfm_core::models::{ChokeGeometry, MtlShape, PhysicalPriors};
use vfm_core::optim::{BatchSize, Grid, Method, Schedule};
use vfm_core::synth::{WellScenario, BASE_EPOCH};
use vfm_core::{EarlyStoppingConfig, ModelKind, OptimizerConfig};

use crate::presets;
use crate::CliError;

/// Which measurements the models learn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// MPFM and well-test rows.
    All,
    /// Well-test rows only.
    Welltest,
}

impl Case {
    pub fn key(&self) -> &'static str {
        match self {
            Case::All => "all",
            Case::Welltest => "welltest",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            Case::All => "all measurements",
            Case::Welltest => "well tests only",
        }
    }
}

impl std::str::FromStr for Case {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Case::All),
            "welltest" | "well_test" | "well-test" => Ok(Case::Welltest),
            other => Err(format!("unknown case `{other}` (expected all or welltest)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodMode {
    Pbl { period_days: f64 },
    /// The step count comes from the optimizer settings of each model.
    Ol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    /// Key into the hyperparameter tables, e.g. `pbl_2w`.
    pub id: String,
    /// Name used in reports, e.g. `PBL 2 weeks`.
    pub label: String,
    pub mode: MethodMode,
    #[serde(default)]
    pub sliding_window_days: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    pub hidden: Vec<usize>,
    pub mtl: MtlShape,
    pub priors: PhysicalPriors,
    pub geometry: ChokeGeometry,
    pub ham_multiplier: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            hidden: vec![16, 16],
            mtl: MtlShape {
                n_wells: 1,
                task_dim: 4,
                width: 16,
                blocks: 2,
            },
            priors: PhysicalPriors::default(),
            geometry: ChokeGeometry::default(),
            ham_multiplier: 0.84,
        }
    }
}

/// Where the well streams come from. With neither CSV files nor explicit
/// scenarios, the built-in drifting scenarios are generated from the seed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub csv: Vec<PathBuf>,
    pub scenarios: Vec<WellScenario>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    /// Learning rates tried for batch learning.
    pub pbl_gammas: Vec<f64>,
    /// Online-learning grid (rates, step counts, optimizers).
    pub ol: Grid,
    /// Exponent of the decaying schedule offered to LR.
    pub lr_decay: f64,
    /// Fraction of the initial training window used as the tuning test set.
    pub holdout_fraction: f64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            pbl_gammas: Grid::pbl_default(Method::Adam, Schedule::Constant).gammas,
            ol: Grid::ol_default(),
            lr_decay: presets::LR_DECAY,
            holdout_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub drift: DriftConfig,
    /// Position of the reference/test cut inside the initial training data.
    pub t1_fraction: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            drift: DriftConfig::default(),
            t1_fraction: 0.5,
        }
    }
}

/// `hyper[case][method id][model]`.
pub type HyperTable = BTreeMap<String, BTreeMap<String, BTreeMap<String, OptimizerConfig>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub cases: Vec<Case>,
    /// Initial split, seconds since the epoch.
    pub split_time: i64,
    /// Initial split of the well-test case; defaults to `split_time`.
    pub welltest_split_time: Option<i64>,
    pub models: Vec<ModelKind>,
    pub include_benchmark: bool,
    pub model: ModelOptions,
    pub methods: Vec<MethodSpec>,
    /// Method whose settings fit the shared initial model.
    pub initial_method: String,
    pub loss: LossConfig,
    pub early_stopping: EarlyStoppingConfig,
    /// Rolling-error window in days.
    pub rolling_window_days: f64,
    pub data: DataConfig,
    pub tune: TuneConfig,
    pub detect: DetectConfig,
    pub hyper: HyperTable,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out_dir: PathBuf::from("vfm-out"),
            cases: vec![Case::All, Case::Welltest],
            split_time: BASE_EPOCH + 365 * SECONDS_PER_DAY,
            welltest_split_time: None,
            models: ModelKind::TRAINABLE.to_vec(),
            include_benchmark: true,
            model: ModelOptions::default(),
            methods: default_methods(),
            initial_method: "pbl_6m".into(),
            loss: LossConfig::default(),
            early_stopping: EarlyStoppingConfig {
                val_fraction: 0.2,
                patience: 10,
                max_epochs: 150,
            },
            rolling_window_days: 14.0,
            data: DataConfig::default(),
            tune: TuneConfig::default(),
            detect: DetectConfig::default(),
            hyper: presets::tuned(),
        }
    }
}

pub fn default_methods() -> Vec<MethodSpec> {
    vec![
        MethodSpec {
            id: "pbl_6m".into(),
            label: "PBL 6 months".into(),
            mode: MethodMode::Pbl { period_days: 182.0 },
            sliding_window_days: None,
        },
        MethodSpec {
            id: "pbl_2w".into(),
            label: "PBL 2 weeks".into(),
            mode: MethodMode::Pbl { period_days: 14.0 },
            sliding_window_days: None,
        },
        MethodSpec {
            id: "ol".into(),
            label: "OL".into(),
            mode: MethodMode::Ol,
            sliding_window_days: None,
        },
    ]
}

/// Table key of a model kind (`lr`, `nn`, ...).
pub fn model_key(kind: ModelKind) -> String {
    kind.label().to_ascii_lowercase()
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("study config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        if self.models.contains(&ModelKind::Benchmark) {
            return bad("the benchmark is controlled by include_benchmark, not listed in models".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.cases.is_empty() {
            return bad("at least one case is required".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].iter().any(|o| o.id == m.id) {
                return bad(format!("duplicate method id `{}`", m.id));
            }
            if let MethodMode::Pbl { period_days } = m.mode {
                if !(period_days > 0.0) {
                    return bad(format!("method `{}`: period must be positive", m.id));
                }
            }
        }
        if !self.methods.iter().any(|m| m.id == self.initial_method) {
            return bad(format!("initial_method `{}` is not a configured method", self.initial_method));
        }
        if !(self.rolling_window_days > 0.0) {
            return bad("rolling_window_days must be positive".into());
        }
        self.early_stopping.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.detect.drift.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for &case in &self.cases {
            for m in &self.methods {
                for &kind in &self.models {
                    let o = self.optimizer(case, &m.id, kind)?;
                    o.validate()
                        .map_err(|e| CliError::Config(format!("{}/{}/{}: {e}", case.key(), m.id, model_key(kind))))?;
                }
            }
        }
        Ok(())
    }

    /// Optimizer settings of one (case, method, model) cell, with the study
    /// seed fanned out to the batching stream.
    pub fn optimizer(&self, case: Case, method: &str, kind: ModelKind) -> Result<OptimizerConfig, CliError> {
        let o = self
            .hyper
            .get(case.key())
            .and_then(|m| m.get(method))
            .and_then(|m| m.get(&model_key(kind)))
            .ok_or_else(|| {
                CliError::Config(format!(
                    "no optimizer settings for hyper.{}.{}.{}",
                    case.key(),
                    method,
                    model_key(kind)
                ))
            })?;
        Ok(OptimizerConfig {
            seed: vfm_core::rng::derive_seed(self.seed, "batching"),
            ..*o
        })
    }

    pub fn split_time(&self, case: Case) -> i64 {
        match case {
            Case::All => self.split_time,
            Case::Welltest => self.welltest_split_time.unwrap_or(self.split_time),
        }
    }

    pub fn method(&self, id: &str) -> Option<&MethodSpec> {
        self.methods.iter().find(|m| m.id == id)
    }
}

/// Helper used by the presets.
pub(crate) fn opt(method: Method, gamma0: f64, schedule: Schedule, steps: usize) -> OptimizerConfig {
    OptimizerConfig {
        method,
        gamma0,
        schedule,
        steps,
        batch_size: BatchSize::Size(32),
        ..OptimizerConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = StudyConfig::default();
        let text = cfg.to_toml();
        let back = StudyConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn missing_cell_is_a_config_error() {
        let mut cfg = StudyConfig::default();
        cfg.hyper.get_mut("all").unwrap().get_mut("ol").unwrap().remove("nn");
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = StudyConfig::from_toml("seed = 3\ncases = [\"welltest\"]\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.cases, vec![Case::Welltest]);
        assert_eq!(cfg.methods.len(), 3);
    }
}

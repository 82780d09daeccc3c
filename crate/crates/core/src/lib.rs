//! Passive learning for steady-state virtual flow meter (VFM) models.
//!
//! The crate bundles a small zoo of flow-rate predictors (linear regression,
//! feed-forward and multi-task networks, a mechanistic choke model and two
//! gray-box hybrids), MAP training with first-order optimizers, the two
//! passive-learning drivers (periodic batch learning and online learning),
//! Hotelling T² shift detection and prequential evaluation metrics.
//!
//! Data flows through the modules roughly as
//!
//! ```text
//! data / synth  ->  models + optim  ->  learning  ->  eval
//!                          drift (offline update-frequency estimation)
//! ```

pub mod data;
pub mod diff;
pub mod drift;
pub mod eval;
pub mod learning;
pub mod models;
pub mod optim;
pub mod rng;
pub mod synth;

pub use data::{
    chronological_split, DataSplit, FeatureScaler, Observation, Source, TargetScale, WellDataset,
    N_FEATURES,
};
pub use learning::{run_benchmark, run_ol, run_pbl, LearningMode, PredictionLog, ScheduleConfig};
pub use models::{init_model, ModelConfig, ModelKind, ModelSpec, ParameterSet};
pub use optim::{fit_map, map_loss, EarlyStoppingConfig, LossSpec, OptimizerConfig, PriorMode};

//! Exhaustive hyperparameter search over learning rate, step count, optimizer
//! and schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Method, OptimError, OptimizerConfig, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub gammas: Vec<f64>,
    pub steps: Vec<usize>,
    pub methods: Vec<Method>,
    pub schedules: Vec<Schedule>,
}

impl Grid {
    /// Learning rates `1e-1 .. 1e-5` for batch learning; the epoch count is
    /// left to early stopping.
    pub fn pbl_default(method: Method, schedule: Schedule) -> Self {
        Self {
            gammas: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            steps: vec![1],
            methods: vec![method],
            schedules: vec![schedule],
        }
    }

    /// The wider online-learning grid, including step counts and both
    /// optimizers.
    pub fn ol_default() -> Self {
        Self {
            gammas: vec![5e-1, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-10],
            steps: vec![1, 10, 20],
            methods: vec![Method::Sgd, Method::Adam],
            schedules: vec![Schedule::Constant],
        }
    }

    pub fn len(&self) -> usize {
        self.gammas.len() * self.steps.len() * self.methods.len() * self.schedules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every combination, overriding the corresponding fields of `base`.
    pub fn candidates(&self, base: &OptimizerConfig) -> Vec<Candidate> {
        let mut out = Vec::with_capacity(self.len());
        for &method in &self.methods {
            for &schedule in &self.schedules {
                for &gamma0 in &self.gammas {
                    for &steps in &self.steps {
                        out.push(Candidate {
                            config: OptimizerConfig {
                                method,
                                schedule,
                                gamma0,
                                steps,
                                ..*base
                            },
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub config: OptimizerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub config: OptimizerConfig,
    /// Cross-well mean MAPE, or the failure reason.
    pub score: Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub best: OptimizerConfig,
    pub best_score: f64,
    pub rows: Vec<GridRow>,
}

/// Scores every candidate with `evaluate` (in parallel) and returns the one
/// with the lowest score; exact ties go to the smaller learning rate, then to
/// fewer steps. Non-finite scores count as divergence.
pub fn grid_search<F>(candidates: &[Candidate], evaluate: F) -> Result<GridOutcome, OptimError>
where
    F: Fn(&OptimizerConfig) -> Result<f64, String> + Sync,
{
    if candidates.is_empty() {
        return Err(OptimError::InvalidConfig("empty grid".into()));
    }
    let rows: Vec<GridRow> = candidates
        .par_iter()
        .map(|c| {
            let score = match evaluate(&c.config) {
                Ok(s) if s.is_finite() => Ok(s),
                Ok(s) => Err(format!("score {s}")),
                Err(e) => Err(e),
            };
            GridRow {
                config: c.config,
                score,
            }
        })
        .collect();

    let mut best: Option<(f64, &GridRow)> = None;
    for row in &rows {
        let Ok(s) = row.score else { continue };
        let better = match best {
            None => true,
            Some((b, r)) => {
                s < b
                    || (s == b
                        && (row.config.gamma0 < r.config.gamma0
                            || (row.config.gamma0 == r.config.gamma0 && row.config.steps < r.config.steps)))
            }
        };
        if better {
            best = Some((s, row));
        }
    }
    match best {
        Some((best_score, row)) => Ok(GridOutcome {
            best: row.config,
            best_score,
            rows: rows.clone(),
        }),
        None => {
            let diag: Vec<String> = rows
                .iter()
                .map(|r| {
                    format!(
                        "{:?} gamma={} E={}: {}",
                        r.config.method,
                        r.config.gamma0,
                        r.config.steps,
                        r.score.as_ref().err().map(String::as_str).unwrap_or("")
                    )
                })
                .collect();
            Err(OptimError::AllDiverged(diag.join("; ")))
        }
    }
}

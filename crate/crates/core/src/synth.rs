//! Synthetic nonstationary well streams.
//!
//! Ground truth is the mechanistic choke model evaluated with time-varying
//! "true" parameters. Virtual drift comes from ramps in the inputs (reservoir
//! depletion, choke schedule, phase fractions); real drift from ramps and
//! jumps in the true parameters.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{feature, Observation, Source, WellDataset, N_FEATURES};
use crate::drift::{estimate_update_frequency, DriftConfig, DriftError};
use crate::models::{mechanistic_flow, ChokeGeometry, MechanisticParams, ModelError, PhysicalPriors};
use crate::rng;

const DAY: f64 = 86_400.0;

/// 2018-01-01T00:00:00Z.
pub const BASE_EPOCH: i64 = 1_514_764_800;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("model evaluation failed at t = {t}: {source}")]
    Model { t: i64, source: ModelError },
}

/// Value moving linearly from `start` to `end` over the whole horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub start: f64,
    pub end: f64,
}

impl Ramp {
    pub fn constant(v: f64) -> Self {
        Self { start: v, end: v }
    }

    fn at(&self, frac: f64) -> f64 {
        self.start + (self.end - self.start) * frac
    }
}

/// Step change of a true parameter at `day`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub day: f64,
    pub param: String,
    pub value: f64,
}

/// Gradual change of a true parameter: from its value at `start_day` to
/// `end_value` at `end_day`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRamp {
    pub param: String,
    pub start_day: f64,
    pub end_day: f64,
    pub end_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WellScenario {
    pub well_id: u32,
    pub start_epoch: i64,
    pub horizon_days: u32,
    pub obs_per_day: f64,
    /// Upstream pressure, Pa.
    pub p1: Ramp,
    /// Downstream pressure, Pa.
    pub p2: Ramp,
    /// Upstream temperature, K.
    pub t1: Ramp,
    /// Choke schedule as `(day, opening)` knots, interpolated linearly and held
    /// constant outside.
    pub u_profile: Vec<(f64, f64)>,
    pub eta_oil: Ramp,
    pub eta_gas: Ramp,
    pub true_params: MechanisticParams,
    pub geometry: ChokeGeometry,
    /// Relative std of day-to-day operating fluctuations of p1, p2 and T1.
    pub pressure_jitter: f64,
    /// Absolute std of choke-opening fluctuations around the schedule.
    pub u_jitter: f64,
    /// Absolute std of phase-fraction fluctuations.
    pub fraction_jitter: f64,
    /// Relative std of the flow-rate measurement noise.
    pub noise_std_mpfm: f64,
    pub noise_std_welltest: f64,
    /// Mean spacing of well tests; `0` disables them.
    pub welltest_interval_days: f64,
    /// Well-test spacing is drawn uniformly from `mean +- spread`.
    pub welltest_interval_spread: f64,
    pub param_ramps: Vec<ParamRamp>,
    pub real_drift_events: Vec<DriftEvent>,
    pub seed: u64,
}

impl Default for WellScenario {
    fn default() -> Self {
        Self {
            well_id: 1,
            start_epoch: BASE_EPOCH,
            horizon_days: 730,
            obs_per_day: 1.0,
            p1: Ramp::constant(150e5),
            p2: Ramp::constant(60e5),
            t1: Ramp::constant(350.0),
            u_profile: vec![(0.0, 0.5)],
            eta_oil: Ramp::constant(0.3),
            eta_gas: Ramp::constant(0.6),
            true_params: PhysicalPriors::default().mean,
            geometry: ChokeGeometry::default(),
            pressure_jitter: 0.0,
            u_jitter: 0.0,
            fraction_jitter: 0.0,
            noise_std_mpfm: 0.05,
            noise_std_welltest: 0.02,
            welltest_interval_days: 60.0,
            welltest_interval_spread: 30.0,
            param_ramps: Vec::new(),
            real_drift_events: Vec::new(),
            seed: 0,
        }
    }
}

impl WellScenario {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.horizon_days == 0 {
            return bad("horizon_days must be positive".into());
        }
        if !(self.obs_per_day > 0.0) {
            return bad("obs_per_day must be positive".into());
        }
        if self.well_id == 0 {
            return bad("well_id must be >= 1".into());
        }
        for (name, v) in [
            ("noise_std_mpfm", self.noise_std_mpfm),
            ("noise_std_welltest", self.noise_std_welltest),
            ("pressure_jitter", self.pressure_jitter),
            ("u_jitter", self.u_jitter),
            ("fraction_jitter", self.fraction_jitter),
            ("welltest_interval_days", self.welltest_interval_days),
            ("welltest_interval_spread", self.welltest_interval_spread),
        ] {
            if !(v >= 0.0) {
                return bad(format!("{name} must be nonnegative"));
            }
        }
        if self.welltest_interval_days > 0.0 && self.welltest_interval_spread >= self.welltest_interval_days {
            return bad("welltest_interval_spread must be below the mean interval".into());
        }
        if self.u_profile.is_empty() {
            return bad("u_profile needs at least one knot".into());
        }
        if self.u_profile.iter().any(|(_, u)| !(0.0..=1.0).contains(u)) {
            return bad("u_profile values must lie in [0, 1]".into());
        }
        if self.u_profile.windows(2).any(|w| w[1].0 < w[0].0) {
            return bad("u_profile days must be nondecreasing".into());
        }
        for r in [self.eta_oil, self.eta_gas] {
            if r.start < 0.0 || r.end < 0.0 {
                return bad("phase fractions must be nonnegative".into());
            }
        }
        if self.eta_oil.start + self.eta_gas.start > 1.0 || self.eta_oil.end + self.eta_gas.end > 1.0 {
            return bad("eta_oil + eta_gas must not exceed 1".into());
        }
        let mut probe = self.true_params;
        for e in &self.real_drift_events {
            probe
                .set(&e.param, e.value)
                .map_err(|err| SynthError::Invalid(format!("drift event: {err}")))?;
        }
        for r in &self.param_ramps {
            probe
                .set(&r.param, r.end_value)
                .map_err(|err| SynthError::Invalid(format!("parameter ramp: {err}")))?;
            if !(r.end_day > r.start_day) {
                return bad(format!("ramp of {} must end after it starts", r.param));
            }
        }
        self.geometry.validate().map_err(|e| SynthError::Invalid(e.to_string()))?;
        Ok(())
    }

    fn choke_at(&self, day: f64) -> f64 {
        let k = &self.u_profile;
        if day <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            let ((d0, u0), (d1, u1)) = (w[0], w[1]);
            if day <= d1 {
                return if d1 > d0 { u0 + (u1 - u0) * (day - d0) / (d1 - d0) } else { u1 };
            }
        }
        k[k.len() - 1].1
    }

    /// True physical parameters at `day`: ramps apply in order, then events
    /// that have occurred by `day`, in order of their day.
    pub fn params_at(&self, day: f64) -> MechanisticParams {
        let mut p = self.true_params;
        for r in &self.param_ramps {
            if day <= r.start_day {
                continue;
            }
            let v0 = p.get(&r.param).unwrap_or(0.0);
            let f = ((day - r.start_day) / (r.end_day - r.start_day)).min(1.0);
            let _ = p.set(&r.param, v0 + (r.end_value - v0) * f);
        }
        let mut events: Vec<&DriftEvent> = self.real_drift_events.iter().filter(|e| e.day <= day).collect();
        events.sort_by(|a, b| a.day.total_cmp(&b.day));
        for e in events {
            let _ = p.set(&e.param, e.value);
        }
        p
    }

    /// Noise-free inputs at `day` before operating fluctuations.
    pub fn inputs_at(&self, day: f64) -> [f64; N_FEATURES] {
        let frac = (day / self.horizon_days as f64).clamp(0.0, 1.0);
        let mut x = [0.0; N_FEATURES];
        x[feature::CHOKE] = self.choke_at(day);
        x[feature::P_UPSTREAM] = self.p1.at(frac);
        x[feature::P_DOWNSTREAM] = self.p2.at(frac);
        x[feature::T_UPSTREAM] = self.t1.at(frac);
        x[feature::ETA_OIL] = self.eta_oil.at(frac);
        x[feature::ETA_GAS] = self.eta_gas.at(frac);
        x
    }
}

fn perturb(sc: &WellScenario, base: [f64; N_FEATURES], r: &mut rng::Rng) -> [f64; N_FEATURES] {
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut z = || -> f64 { std_normal.sample(r) };
    let mut x = base;
    x[feature::CHOKE] = (x[feature::CHOKE] + sc.u_jitter * z()).clamp(0.0, 1.0);
    for i in [feature::P_UPSTREAM, feature::P_DOWNSTREAM, feature::T_UPSTREAM] {
        x[i] *= 1.0 + sc.pressure_jitter * z();
    }
    let mut eo = (x[feature::ETA_OIL] + sc.fraction_jitter * z()).max(0.0);
    let mut eg = (x[feature::ETA_GAS] + sc.fraction_jitter * z()).max(0.0);
    if eo + eg > 1.0 {
        let s = eo + eg;
        eo /= s;
        eg /= s;
    }
    x[feature::ETA_OIL] = eo;
    x[feature::ETA_GAS] = eg;
    x
}

/// Generates the MPFM stream with interleaved well tests.
///
/// MPFM rows fall at `i / obs_per_day` days; well tests at random spacing
/// from the scenario's interval, offset half a day so they never share a
/// timestamp with an MPFM row. Both measure the same underlying flow with
/// their own relative noise. Deterministic in the scenario (seed included).
pub fn generate_stream(sc: &WellScenario) -> Result<WellDataset, SynthError> {
    sc.validate()?;
    let mut r_inputs = rng::stream(sc.seed, "scenario/inputs");
    let mut r_noise = rng::stream(sc.seed, "scenario/noise");
    let mut r_tests = rng::stream(sc.seed, "scenario/welltests");
    let horizon = sc.horizon_days as f64;

    let mut times: Vec<(f64, Source)> = Vec::new();
    let n = (horizon * sc.obs_per_day).round() as usize;
    times.extend((0..n).map(|i| (i as f64 / sc.obs_per_day, Source::Mpfm)));
    if sc.welltest_interval_days > 0.0 {
        let (m, s) = (sc.welltest_interval_days, sc.welltest_interval_spread);
        let mut day = r_tests.random_range(0.0..m).floor() + 0.5;
        while day < horizon {
            times.push((day, Source::WellTest));
            let gap = if s > 0.0 { r_tests.random_range(m - s..=m + s) } else { m };
            day = (day + gap).floor() + 0.5;
        }
    }
    times.sort_by(|a, b| a.0.total_cmp(&b.0));

    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut obs = Vec::with_capacity(times.len());
    for (day, source) in times {
        let t = sc.start_epoch + (day * DAY).round() as i64;
        let x = perturb(sc, sc.inputs_at(day), &mut r_inputs);
        let q = mechanistic_flow(&sc.params_at(day), &sc.geometry, &x).map_err(|source| SynthError::Model { t, source })?;
        let rel = match source {
            Source::Mpfm => sc.noise_std_mpfm,
            Source::WellTest => sc.noise_std_welltest,
        };
        let eps: f64 = std_normal.sample(&mut r_noise);
        obs.push(Observation {
            t,
            x,
            y: (q * (1.0 + rel * eps)).max(0.0),
            source,
            well_id: sc.well_id,
        });
    }
    WellDataset::new(sc.well_id, obs).map_err(|e| SynthError::Invalid(e.to_string()))
}

/// Five drifting wells over two years, daily MPFM, one well test every 30 to
/// 90 days. Each well combines reservoir depletion, choke adjustments, rising
/// water cut and wear of the choke (discharge coefficient), plus one abrupt
/// change of a fluid property.
pub fn default_scenarios(seed: u64) -> Vec<WellScenario> {
    let mut r = rng::stream(seed, "scenario");
    let base = PhysicalPriors::default().mean;
    (1..=5u32)
        .map(|well_id| {
            let mut u = |lo: f64, hi: f64| r.random_range(lo..hi);
            let p1_start = u(170e5, 210e5);
            let p1_end = p1_start * u(0.6, 0.7);
            let p2 = u(40e5, 60e5);
            let eo = u(0.25, 0.4);
            let eg = u(0.45, 0.6);
            let water_gain = u(0.1, 0.2);
            // operator choke moves: a new setting every 45 to 120 days
            let mut level = u(0.35, 0.6);
            let mut knots = vec![(0.0, level)];
            let mut day = u(45.0, 120.0).round();
            while day < 730.0 {
                knots.push((day - 1.0, level));
                level = (level + u(-0.25, 0.25)).clamp(0.25, 0.85);
                knots.push((day, level));
                day += u(45.0, 120.0).round();
            }
            let true_params = MechanisticParams {
                rho_oil: base.rho_oil + u(-60.0, 60.0),
                rho_wat: base.rho_wat + u(0.0, 30.0),
                kappa: base.kappa + u(-0.05, 0.05),
                m_gas: base.m_gas + u(-0.002, 0.002),
                p_cr: base.p_cr + u(-0.05, 0.05),
                c_d: base.c_d + u(-0.05, 0.05),
            };
            let wear_end = true_params.c_d * u(0.55, 0.65);
            let event_day = u(420.0, 620.0);
            let m_gas_new = true_params.m_gas * u(1.2, 1.35);
            let interval = u(45.0, 75.0);
            WellScenario {
                well_id,
                horizon_days: 730,
                obs_per_day: 1.0,
                p1: Ramp { start: p1_start, end: p1_end },
                p2: Ramp::constant(p2),
                t1: Ramp { start: u(345.0, 360.0), end: u(335.0, 345.0) },
                u_profile: knots,
                eta_oil: Ramp { start: eo, end: eo - water_gain * 0.6 },
                eta_gas: Ramp { start: eg, end: eg - water_gain * 0.4 },
                true_params,
                pressure_jitter: 0.01,
                u_jitter: 0.01,
                fraction_jitter: 0.005,
                welltest_interval_days: interval,
                welltest_interval_spread: 15.0,
                param_ramps: vec![ParamRamp {
                    param: "C_D".into(),
                    start_day: 0.0,
                    end_day: 730.0,
                    end_value: wear_end,
                }],
                real_drift_events: vec![DriftEvent {
                    day: event_day,
                    param: "M_gas".into(),
                    value: m_gas_new,
                }],
                seed: rng::derive_seed(seed, &format!("scenario/well{well_id}")),
                ..WellScenario::default()
            }
        })
        .collect()
}

/// Fraction of observations after the midpoint that reject the stationary
/// hypothesis at level `alpha`, testing each one against everything before
/// the midpoint.
pub fn stationarity_probe(ds: &WellDataset, alpha: f64) -> Result<f64, DriftError> {
    let need = 2 * N_FEATURES + 2;
    if ds.len() < need {
        return Err(DriftError::TooFewObservations { needed: need, got: ds.len() });
    }
    let cfg = DriftConfig {
        alpha,
        confirm_count: 1,
        ..DriftConfig::default()
    };
    Ok(estimate_update_frequency(ds.observations(), 0.5, &cfg)?.detection_rate())
}

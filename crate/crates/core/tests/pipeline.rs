//! End-to-end checks across modules: synthetic data through fitting, the
//! learning drivers, evaluation and persistence.

use vfm_core::data::{ingest_csv, write_csv, Source};
use vfm_core::eval::{mape_of, MetricReport};
use vfm_core::learning::{fit_fresh, SECONDS_PER_DAY};
use vfm_core::models::checkpoint;
use vfm_core::optim::{BatchSize, Method};
use vfm_core::synth::{generate_stream, ParamRamp, Ramp, WellScenario, BASE_EPOCH};
use vfm_core::{
    chronological_split, run_benchmark, run_ol, run_pbl, EarlyStoppingConfig, ModelConfig, ModelKind, OptimizerConfig,
    ScheduleConfig, WellDataset,
};

const DAY: i64 = SECONDS_PER_DAY;

/// One year of daily data; the discharge coefficient wears by a third over
/// the second half, so a frozen model falls behind.
fn wearing_well() -> WellDataset {
    let base = WellScenario::default();
    let c_d = base.true_params.c_d;
    generate_stream(&WellScenario {
        horizon_days: 360,
        p1: Ramp { start: 180e5, end: 160e5 },
        u_profile: vec![(0.0, 0.45), (90.0, 0.45), (91.0, 0.55), (250.0, 0.55), (251.0, 0.4)],
        pressure_jitter: 0.01,
        u_jitter: 0.01,
        fraction_jitter: 0.005,
        noise_std_mpfm: 0.02,
        param_ramps: vec![ParamRamp {
            param: "C_D".into(),
            start_day: 180.0,
            end_day: 360.0,
            end_value: c_d * 0.67,
        }],
        seed: 11,
        ..base
    })
    .unwrap()
}

fn adam(gamma0: f64, steps: usize) -> OptimizerConfig {
    OptimizerConfig {
        method: Method::Adam,
        gamma0,
        steps,
        batch_size: BatchSize::Size(32),
        seed: 3,
        ..OptimizerConfig::default()
    }
}

fn batch_schedule(period_days: f64) -> ScheduleConfig {
    ScheduleConfig {
        early_stopping: EarlyStoppingConfig {
            val_fraction: 0.2,
            patience: 10,
            max_epochs: 60,
        },
        ..ScheduleConfig::pbl(period_days, adam(0.05, 1))
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let ds = wearing_well();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("well.csv");
    write_csv(&path, ds.observations()).unwrap();
    let back = ingest_csv(&path).unwrap();
    assert_eq!(back.reject_count(), 0);
    assert_eq!(back.datasets.len(), 1);
    assert_eq!(back.datasets[0], ds);
}

#[test]
fn updating_beats_a_frozen_model_under_wear() {
    let ds = wearing_well();
    let split = chronological_split(&ds, BASE_EPOCH + 180 * DAY);
    assert!(split.train.iter().all(|o| o.t < split.split_time));
    assert!(split.test.iter().all(|o| o.t >= split.split_time));

    let m0 = fit_fresh(&ModelConfig::new(ModelKind::Mm, 5), &split.train, &batch_schedule(182.0)).unwrap();

    let frozen = run_ol(&m0, &split, &ScheduleConfig::ol(0, adam(0.05, 1))).unwrap();
    let online = run_ol(&m0, &split, &ScheduleConfig::ol(10, adam(0.01, 10))).unwrap();
    let batch = run_pbl(&m0, &split, &batch_schedule(14.0)).unwrap();
    let bench = run_benchmark(&split);

    let score = |log: &vfm_core::PredictionLog| mape_of(&log.entries).unwrap().value;
    let (f, o, b, n) = (score(&frozen), score(&online), score(&batch), score(&bench));
    assert!(o < f, "online {o} vs frozen {f}");
    assert!(b < f, "batch {b} vs frozen {f}");
    // the previous measurement is a strong baseline on daily data
    assert!(n < f, "benchmark {n} vs frozen {f}");
    assert!(!batch.metadata.retrains.is_empty());
    assert!(batch.metadata.retrains.iter().all(|r| r.error.is_none()));
    assert_eq!(frozen.entries.len(), split.test.len());
}

#[test]
fn checkpoint_and_log_round_trips() {
    let ds = wearing_well();
    let split = chronological_split(&ds, BASE_EPOCH + 180 * DAY);
    for kind in [ModelKind::Lr, ModelKind::Nn, ModelKind::Hem] {
        let mut mc = ModelConfig::new(kind, 9);
        mc.hidden = vec![8, 8];
        let m = fit_fresh(&mc, &split.train, &batch_schedule(182.0)).unwrap();
        let (back, state) = checkpoint::from_str(&checkpoint::to_string(&m, None)).unwrap();
        assert!(state.is_none());
        for o in &split.test {
            assert_eq!(m.predict(o).unwrap().to_bits(), back.predict(o).unwrap().to_bits());
        }
    }

    let m0 = fit_fresh(&ModelConfig::new(ModelKind::Mm, 5), &split.train, &batch_schedule(182.0)).unwrap();
    let log = run_ol(&m0, &split, &ScheduleConfig::ol(2, adam(0.01, 2))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    log.write(&path).unwrap();
    let back = vfm_core::PredictionLog::read(&path).unwrap();
    assert_eq!(back, log);
    let window = 14 * DAY;
    assert_eq!(
        MetricReport::from_log(&back, window).unwrap(),
        MetricReport::from_log(&log, window).unwrap()
    );
}

#[test]
fn welltest_filter_keeps_only_tests() {
    let ds = wearing_well();
    let tests = ds.filter_source(Source::WellTest);
    assert!(!tests.is_empty());
    assert!(tests.observations().iter().all(|o| o.source == Source::WellTest));
    assert_eq!(
        tests.len() + ds.filter_source(Source::Mpfm).len(),
        ds.len()
    );
}

mod properties {
    use proptest::prelude::*;
    use vfm_core::drift::{f_cdf, f_quantile, hotelling_t2};
    use vfm_core::eval::mape_of;
    use vfm_core::data::Source;
    use vfm_core::learning::LogEntry;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn f_quantile_inverts_the_cdf(p in 0.01f64..0.99, d1 in 1u32..10, d2 in 2u32..400) {
            let x = f_quantile(p, d1, d2);
            prop_assert!((f_cdf(x, d1, d2) - p).abs() < 1e-9);
        }

        #[test]
        fn f_cdf_is_monotone(a in 0.0f64..20.0, b in 0.0f64..20.0, d1 in 1u32..10, d2 in 2u32..400) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(f_cdf(lo, d1, d2) <= f_cdf(hi, d1, d2) + 1e-15);
        }

        #[test]
        fn hotelling_ignores_units_and_offsets(
            rows in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 12..40),
            probe in prop::array::uniform3(-2.0f64..2.0),
            scale in prop::array::uniform3(1e-4f64..1e6),
            shift in prop::array::uniform3(-1e3f64..1e3),
        ) {
            let map = |r: &[f64; 3]| [r[0] * scale[0] + shift[0], r[1] * scale[1] + shift[1], r[2] * scale[2] + shift[2]];
            let a = hotelling_t2(&rows, &[probe]);
            let mapped: Vec<[f64; 3]> = rows.iter().map(map).collect();
            let b = hotelling_t2(&mapped, &[map(&probe)]);
            if let (Ok(a), Ok(b)) = (a, b) {
                // conditioning of random samples limits the agreement
                prop_assert!((a - b).abs() <= 1e-6 * a.max(1.0), "{a} {b}");
            }
        }

        #[test]
        fn mape_is_scale_free(
            pairs in prop::collection::vec((1.0f64..1e4, 0.0f64..2e4), 1..50),
            k in 1e-3f64..1e3,
        ) {
            let entries = |f: f64| -> Vec<LogEntry> {
                pairs.iter().enumerate().map(|(i, &(y, p))| LogEntry {
                    t: i as i64,
                    well_id: 1,
                    y_true: y * f,
                    y_pred: Some(p * f),
                    model_version: 0,
                    source: Source::Mpfm,
                }).collect()
            };
            let a = mape_of(&entries(1.0)).unwrap().value;
            let b = mape_of(&entries(k)).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}

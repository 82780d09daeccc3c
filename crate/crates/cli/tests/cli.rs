use std::fs;
use std::path::Path;
use std::process::Command;

use vfm_cli::commands::{cmd_detect, cmd_report, cmd_run, cmd_simulate, cmd_tune};
use vfm_cli::config::{model_key, Case, MethodMode, MethodSpec, StudyConfig};
use vfm_core::data::{ingest_csv, Source};
use vfm_core::learning::SECONDS_PER_DAY;
use vfm_core::optim::{Grid, Method, Schedule};
use vfm_core::synth::{Ramp, WellScenario, BASE_EPOCH};
use vfm_core::{EarlyStoppingConfig, ModelKind, PredictionLog};

const DAY: i64 = SECONDS_PER_DAY;

fn scenario(well_id: u32, days: u32) -> WellScenario {
    WellScenario {
        well_id,
        horizon_days: days,
        p1: Ramp { start: 180e5, end: 150e5 },
        u_profile: vec![(0.0, 0.4), (days as f64 * 0.5, 0.6)],
        pressure_jitter: 0.01,
        u_jitter: 0.01,
        fraction_jitter: 0.005,
        welltest_interval_days: 20.0,
        welltest_interval_spread: 5.0,
        seed: 100 + well_id as u64,
        ..WellScenario::default()
    }
}

/// Two short wells, two models and few epochs: small enough to run the whole
/// pipeline in a test.
fn small_config(out: &Path) -> StudyConfig {
    let mut cfg = StudyConfig {
        out_dir: out.to_path_buf(),
        split_time: BASE_EPOCH + 150 * DAY,
        models: vec![ModelKind::Lr, ModelKind::Mm],
        early_stopping: EarlyStoppingConfig {
            val_fraction: 0.2,
            patience: 5,
            max_epochs: 20,
        },
        ..StudyConfig::default()
    };
    cfg.data.scenarios = vec![scenario(1, 220), scenario(2, 220)];
    cfg
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn vfm(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vfm")).args(args).output().expect("binary runs")
}

#[test]
fn simulate_writes_one_csv_per_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    let mut a = scenario(1, 100);
    a.obs_per_day = 2.0;
    let mut b = scenario(2, 100);
    b.obs_per_day = 2.0;
    cfg.data.scenarios = vec![a, b];

    let paths = cmd_simulate(&cfg, dir.path()).unwrap();
    assert_eq!(paths.len(), 2);
    for p in &paths {
        let report = ingest_csv(p).unwrap();
        assert_eq!(report.reject_count(), 0);
        let obs = report.datasets[0].observations();
        assert_eq!(obs.iter().filter(|o| o.source == Source::Mpfm).count(), 200);
        assert!(obs.iter().any(|o| o.source == Source::WellTest));
        assert!(obs.iter().all(|o| o.t >= BASE_EPOCH && o.t < BASE_EPOCH + 100 * DAY));
    }

    let first: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
    let again = cmd_simulate(&cfg, dir.path()).unwrap();
    let second: Vec<Vec<u8>> = again.iter().map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn default_config_round_trips_through_toml() {
    let out = vfm(&["config", "--defaults"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed = StudyConfig::from_toml(&text).unwrap();
    assert_eq!(parsed, StudyConfig::default());
    assert_eq!(parsed.to_toml(), text);
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();

    let bad_toml = dir.path().join("bad.toml");
    fs::write(&bad_toml, "seed = \"seven\"\n").unwrap();
    let out = vfm(&["--config", bad_toml.to_str().unwrap(), "run"]);
    assert_eq!(out.status.code(), Some(1));

    let invalid = dir.path().join("invalid.toml");
    fs::write(&invalid, "rolling_window_days = -1.0\n").unwrap();
    assert_eq!(vfm(&["--config", invalid.to_str().unwrap(), "run"]).status.code(), Some(1));

    assert_eq!(vfm(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(vfm(&["--config", dir.path().join("absent.toml").to_str().unwrap(), "run"]).status.code(), Some(1));

    let missing_csv = dir.path().join("missing.toml");
    fs::write(&missing_csv, format!("[data]\ncsv = [\"{}\"]\n", dir.path().join("nope.csv").display())).unwrap();
    let out = vfm(&["--config", missing_csv.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "run"]);
    assert_eq!(out.status.code(), Some(2));

    assert!(vfm(&["--help"]).status.success());
}

#[test]
fn tune_echoes_a_single_point_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.cases = vec![Case::All];
    cfg.models = vec![ModelKind::Mm];
    cfg.tune.pbl_gammas = vec![0.01];
    cfg.tune.ol = Grid {
        gammas: vec![0.05],
        steps: vec![3],
        methods: vec![Method::Sgd],
        schedules: vec![Schedule::Constant],
    };

    let outcome = cmd_tune(&cfg, dir.path()).unwrap();
    let all = &outcome.hyper["all"];
    for id in ["pbl_6m", "pbl_2w"] {
        let c = all[id]["mm"];
        assert_eq!((c.method, c.gamma0), (Method::Adam, 0.01));
    }
    let ol = all["ol"]["mm"];
    assert_eq!((ol.method, ol.gamma0, ol.steps, ol.schedule), (Method::Sgd, 0.05, 3, Schedule::Constant));
    assert_eq!(outcome.rows.len(), 3);
    assert!(outcome.rows.iter().all(|r| r.chosen));

    let md = read(&dir.path().join("tune/hyper_all.md"));
    assert!(md.contains("| MM |"), "{md}");
    assert!(md.contains("5e-2 | 3 | SGD"), "{md}");
    assert!(md.contains("1e-2 | E.S. | Adam"), "{md}");

    // the emitted table drops into a study config unchanged
    let hyper = read(&dir.path().join("tune/hyper.toml"));
    let merged = StudyConfig::from_toml(&format!("models = [\"mm\"]\ncases = [\"all\"]\n{hyper}")).unwrap();
    assert_eq!(merged.hyper, outcome.hyper);

    let csv = read(&dir.path().join("tune/candidates.csv"));
    assert!(csv.starts_with("case,method,model,optimizer,gamma0,schedule,steps,score,chosen\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn run_writes_logs_metrics_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let results = cmd_run(&cfg, dir.path()).unwrap();
    assert_eq!(results.len(), 2);

    assert_eq!(StudyConfig::from_toml(&read(&dir.path().join("config.toml"))).unwrap(), cfg);
    for case in ["all", "welltest"] {
        let base = dir.path().join(case);
        let manifest = read(&base.join("logs/manifest.txt"));
        // two models times three methods, plus the benchmark
        assert_eq!(manifest.lines().count(), 7, "{manifest}");
        for name in manifest.lines() {
            assert!(base.join("logs").join(name).exists());
            assert!(base.join("logs").join(name.replace(".csv", ".meta.json")).exists());
        }
        for f in ["summary.csv", "summary.txt", "per_well.csv"] {
            assert!(base.join("metrics").join(f).exists(), "{case}/{f}");
        }
        for id in [1, 2] {
            for kind in [ModelKind::Lr, ModelKind::Mm] {
                assert!(base.join(format!("models/{}_well{id}.ckpt", model_key(kind))).exists());
            }
        }
    }

    // the well-test case sees no MPFM data at all
    let wt = results.iter().find(|r| r.case == Case::Welltest).unwrap();
    for log in &wt.logs {
        assert!(!log.entries.is_empty());
        assert!(log.entries.iter().all(|e| e.source == Source::WellTest), "{}", log.metadata.model);
    }
    let all = results.iter().find(|r| r.case == Case::All).unwrap();
    assert!(all.logs.iter().all(|l| l.entries.iter().any(|e| e.source == Source::Mpfm)));
    for log in all.logs.iter().chain(&wt.logs) {
        assert!(log.entries.iter().all(|e| e.t >= cfg.split_time));
    }

    // report reproduces the metrics from the logs alone
    let summary = read(&dir.path().join("all/metrics/summary.csv"));
    fs::remove_dir_all(dir.path().join("all/metrics")).unwrap();
    let tables = cmd_report(&cfg, dir.path()).unwrap();
    assert_eq!(tables.len(), 2);
    assert_eq!(read(&dir.path().join("all/metrics/summary.csv")), summary);
    let ol_mm = tables[0].1.get("OL", "MM").unwrap();
    assert!(ol_mm.is_finite() && ol_mm >= 0.0);
}

#[test]
fn report_without_logs_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    assert_eq!(cmd_report(&cfg, dir.path()).unwrap_err().exit_code(), 2);
}

#[test]
fn never_retrained_batch_matches_zero_step_online() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.cases = vec![Case::All];
    cfg.include_benchmark = false;
    cfg.methods.push(MethodSpec {
        id: "pbl_never".into(),
        label: "PBL never".into(),
        mode: MethodMode::Pbl { period_days: f64::INFINITY },
        sliding_window_days: None,
    });
    let cell = cfg.hyper["all"]["pbl_6m"].clone();
    cfg.hyper.get_mut("all").unwrap().insert("pbl_never".into(), cell);
    cfg.validate().unwrap();

    let res = cmd_run(&cfg, dir.path()).unwrap();
    let never: Vec<&PredictionLog> = res[0].logs.iter().filter(|l| l.metadata.method == "PBL never").collect();
    assert_eq!(never.len(), 2);
    for log in never {
        assert!(log.metadata.retrains.is_empty());
        // without a refit every prediction comes from the initial model
        let v0 = log.entries[0].model_version;
        assert!(log.entries.iter().all(|e| e.model_version == v0));
    }
}

#[test]
fn detect_finds_an_input_shift_and_ignores_a_stationary_well() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.cases = vec![Case::All];
    cfg.split_time = BASE_EPOCH + 200 * DAY;
    cfg.detect.t1_fraction = 0.5;
    let mut still = scenario(1, 200);
    still.p1 = Ramp::constant(170e5);
    still.u_profile = vec![(0.0, 0.5)];
    let mut moved = scenario(2, 200);
    moved.p1 = Ramp::constant(170e5);
    moved.u_profile = vec![(0.0, 0.4), (149.0, 0.4), (150.0, 0.7)];
    cfg.data.scenarios = vec![still, moved];

    let res = cmd_detect(&cfg, dir.path()).unwrap();
    let rows = &res[0].1;
    let r1 = rows[0].report.as_ref().unwrap();
    assert_eq!(r1.estimated_tau, None);
    let r2 = rows[1].report.as_ref().unwrap();
    let tau = r2.estimated_tau.expect("shift detected") as f64 / DAY as f64;
    // the reference sample ends near day 100 and the choke moves on day 150
    assert!((45.0..=55.0).contains(&tau), "tau {tau}");

    let summary = read(&dir.path().join("detect/all/summary.csv"));
    let mut lines = summary.lines();
    assert_eq!(
        lines.next(),
        Some("well_id,t1,n_reference,n_points,detection_rate,confirmed_at,estimated_tau_days,note")
    );
    assert_eq!(lines.count(), 2);
    assert!(dir.path().join("detect/all/well_2.csv").exists());
}

#[test]
fn detect_skips_wells_with_too_few_tests() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.cases = vec![Case::Welltest];
    let res = cmd_detect(&cfg, dir.path()).unwrap();
    assert!(res[0].1.iter().all(|r| r.report.is_err()));
    let summary = read(&dir.path().join("detect/welltest/summary.csv"));
    assert!(summary.lines().skip(1).all(|l| l.ends_with("observations") || l.contains("need")), "{summary}");
}

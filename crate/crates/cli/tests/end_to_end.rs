use std::path::Path;
use std::process::Command;

use gaitradar::pipeline::Configuration;
use gaitradar::sim::{Pace, Protocol};
use gaitradar_cli::config::{TestConfig, TrialConfig};
use gaitradar_cli::run::{self, read_errors, read_report, ERRORS_CSV, REPORT_JSON};

fn walk(name: &str, protocol: Protocol, repetitions: u32, pace: Pace) -> TestConfig {
    TestConfig {
        name: name.into(),
        protocol,
        repetitions,
        pace,
        path_length_m: 3.0,
        duration_cap_s: None,
    }
}

fn small_config(configuration: Configuration, seed: u64, out: &Path) -> TrialConfig {
    TrialConfig {
        configuration,
        seed,
        output_dir: out.to_path_buf(),
        tests: vec![
            walk("walk", Protocol::ContinuousWalk, 3, Pace::Normal),
            walk("tug", Protocol::Tug, 1, Pace::Quick),
        ],
        ..TrialConfig::default()
    }
}

#[test]
fn repeated_runs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_config(Configuration::C5, 7, &dir.path().join("a"));
    let b = small_config(Configuration::C5, 7, &dir.path().join("b"));
    run::run_trial(&a).unwrap();
    run::run_trial(&b).unwrap();
    for file in [REPORT_JSON, ERRORS_CSV, run::EVENTS_CSV, run::CYCLES_CSV] {
        let x = std::fs::read(a.output_dir.join(file)).unwrap();
        let y = std::fs::read(b.output_dir.join(file)).unwrap();
        assert!(x == y, "{file} differs between runs");
    }
    let plots = |d: &Path| {
        let mut names: Vec<_> = std::fs::read_dir(d.join(run::PLOTS_DIR))
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        names
    };
    assert_eq!(plots(&a.output_dir), plots(&b.output_dir));
    assert_eq!(plots(&a.output_dir).len(), 20);
}

#[test]
fn recordings_reproduce_the_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    let memory = small_config(Configuration::C6, 3, &dir.path().join("memory"));
    run::run_trial(&memory).unwrap();

    let recordings = dir.path().join("iq");
    let written = run::simulate(&memory, &recordings).unwrap();
    // four nodes and a reference for each of the two tests
    assert_eq!(written.len(), 2 * 4 + 2);
    let files = TrialConfig {
        output_dir: dir.path().join("files"),
        input_dir: Some(recordings),
        ..memory.clone()
    };
    run::run_trial(&files).unwrap();
    let a = std::fs::read(memory.output_dir.join(REPORT_JSON)).unwrap();
    let b = std::fs::read(files.output_dir.join(REPORT_JSON)).unwrap();
    assert!(a == b, "file-based report differs from the in-memory one");
}

#[test]
fn report_means_match_the_cycle_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(Configuration::C4, 5, dir.path());
    run::run_trial(&cfg).unwrap();
    let report = read_report(&dir.path().join(REPORT_JSON)).unwrap();
    let rows = read_errors(&dir.path().join(ERRORS_CSV)).unwrap();
    assert!(!report.errors.is_empty());
    for e in report.errors.iter().chain(&report.per_test_errors) {
        let of: Vec<_> = rows
            .iter()
            .filter(|r| r.parameter == e.parameter && e.test.as_ref().is_none_or(|t| &r.test == t))
            .collect();
        assert_eq!(of.len(), e.n, "{} {:?}", e.parameter, e.test);
        let mean = of.iter().map(|r| r.abs_error).sum::<f64>() / of.len() as f64;
        assert!((mean - e.mean_abs_error).abs() <= 1e-12, "{}: {mean} vs {}", e.parameter, e.mean_abs_error);
        let rel: Vec<f64> = of.iter().filter_map(|r| r.rel_error).collect();
        let rel_mean = rel.iter().sum::<f64>() / rel.len() as f64;
        assert!((rel_mean - e.mean_rel_error.unwrap()).abs() <= 1e-12);
    }
    // C4 has feet nodes only, so the torso-velocity method never runs but
    // foot speed is reported.
    assert!(report.errors.iter().any(|e| e.parameter == "foot_max_velocity"));
}

#[test]
fn recordings_without_reference_can_still_be_processed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(Configuration::C2, 2, &dir.path().join("out"));
    cfg.tests.truncate(1);
    let recordings = dir.path().join("iq");
    run::simulate(&cfg, &recordings).unwrap();
    std::fs::remove_file(recordings.join("walk").join(run::REFERENCE_FILE)).unwrap();
    cfg.input_dir = Some(recordings);

    let paths = run::process(&cfg).unwrap();
    let events = std::fs::read_to_string(&paths[0]).unwrap();
    assert!(events.starts_with("test,kind,foot,time_s,source"));
    assert!(events.lines().count() > 10, "{events}");
    let cycles = std::fs::read_to_string(&paths[1]).unwrap();
    assert!(cycles.lines().count() > 2);

    let err = run::run_trial(&cfg).err().expect("validation needs a reference");
    assert!(err.to_string().contains("reference.json"), "{err}");
}

#[test]
fn damaged_recordings_are_reported_with_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(Configuration::C1, 1, &dir.path().join("out"));
    cfg.tests.truncate(1);
    let recordings = dir.path().join("iq");
    run::simulate(&cfg, &recordings).unwrap();
    let file = run::recording_path(&recordings, "walk", 1);
    let bytes = std::fs::read(&file).unwrap();
    // Keep the 50-byte header and ten and a half chirps.
    std::fs::write(&file, &bytes[..50 + 10 * 160 * 8 + 640]).unwrap();
    cfg.input_dir = Some(recordings);
    let err = format!("{:#}", run::run_trial(&cfg).err().unwrap());
    assert!(err.contains("node1.gwiq") && err.contains("last complete chirp is 9"), "{err}");
}

fn gaitradar() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaitradar"))
}

#[test]
fn binary_rejects_a_short_node_list() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c3.toml");
    std::fs::write(
        &path,
        r#"configuration = "C3"

[[nodes]]
id = 1
side = 1
focus = "torso"
position_m = [-1.0, -0.3, 1.3]
boresight = [1.0, 0.0, 0.0]
beamwidth_deg = 40.0
"#,
    )
    .unwrap();
    let out = gaitradar().arg("validate").arg("--config").arg(&path).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("configuration requires 2 nodes"), "{stderr}");
}

#[test]
fn binary_flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "configuration = \"C2\"\nseed = 1\n").unwrap();
    let out = gaitradar()
        .args(["show-config", "--seed", "9", "--configuration", "c6", "--snr-db", "-3", "--set", "waveform.f0_ghz=24"])
        .arg("--config")
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = TrialConfig::from_toml(&text, Path::new("stdout")).unwrap();
    assert_eq!((cfg.seed, cfg.configuration, cfg.snr_db), (9, Configuration::C6, -3.0));
    assert_eq!(cfg.waveform.f0_ghz, 24.0);

    let bad = gaitradar().args(["show-config", "--set", "tests=3"]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("malformed config"));
}

#[test]
fn binary_runs_every_verb() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    let mut cfg = small_config(Configuration::C5, 4, &dir.path().join("out"));
    cfg.tests.truncate(1);
    std::fs::write(&path, cfg.to_toml()).unwrap();
    let run_verb = |args: &[&str]| {
        let out = gaitradar().args(args).arg("--config").arg(&path).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    let iq = dir.path().join("iq");
    let iq_arg = iq.to_str().unwrap();
    run_verb(&["simulate", "--input-dir", iq_arg]);
    assert!(iq.join("walk").join("node4.gwiq").exists());
    run_verb(&["process", "--input-dir", iq_arg]);
    let summary = run_verb(&["validate", "--input-dir", iq_arg]);
    assert!(summary.contains("stride_time"), "{summary}");

    let plots = cfg.output_dir.join(run::PLOTS_DIR);
    std::fs::remove_dir_all(&plots).unwrap();
    let out = gaitradar().arg("report").arg(&cfg.output_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("wrote 20 plots"));
}

#[test]
fn feet_fusion_matches_or_beats_one_feet_node_on_every_test() {
    let dir = tempfile::tempdir().unwrap();
    let suite = vec![
        walk("tug", Protocol::Tug, 2, Pace::Quick),
        walk("walk_normal", Protocol::ContinuousWalk, 3, Pace::Normal),
        walk("walk_slow", Protocol::ContinuousWalk, 3, Pace::Slow),
        walk("walk_quick", Protocol::ContinuousWalk, 3, Pace::Quick),
        TestConfig {
            duration_cap_s: Some(15.0),
            ..walk("walk_long", Protocol::ContinuousWalk, 100, Pace::Normal)
        },
    ];
    let ratios = |configuration| {
        let cfg = TrialConfig {
            configuration,
            seed: 21,
            output_dir: dir.path().join(format!("{configuration:?}")),
            tests: suite.clone(),
            ..TrialConfig::default()
        };
        run::run_trial(&cfg)
            .unwrap()
            .report
            .tests
            .iter()
            .map(|t| (t.name.clone(), t.hs_detection_ratio))
            .collect::<Vec<_>>()
    };
    let c2 = ratios(Configuration::C2);
    let c4 = ratios(Configuration::C4);
    assert_eq!(c2.len(), 5);
    for ((name, two), (_, four)) in c2.iter().zip(&c4) {
        assert!(four >= two, "{name}: C4 {four} < C2 {two}");
    }
}

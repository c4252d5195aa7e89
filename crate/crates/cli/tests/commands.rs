use std::path::Path;
use std::process::{Command, Output};

use freqalloc_cli::presets::{preset, PRESETS};
use freqalloc_cli::{parse_config, OUT_DIR_ENV};

fn freqalloc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqalloc"))
        .args(args)
        .current_dir(dir)
        .env_remove(OUT_DIR_ENV)
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

const SMALL: &str = r#"{
  "name": "small",
  "experiment": "static",
  "topology": { "kind": "uniform_linear", "n": 12, "d": 1.0 },
  "r": 2,
  "scheduler": { "kind": "poisson_clock", "delta_t": 0.1 },
  "replicas": 3,
  "base_seed": 9,
  "outputs": { "dir": "out/small" }
}"#;

#[test]
fn presets_print_valid_configs() {
    let tmp = tempfile::tempdir().unwrap();
    for name in PRESETS {
        let out = freqalloc(&["preset", name], tmp.path());
        assert!(out.status.success());
        let cfg = parse_config(&text(&out.stdout)).unwrap();
        assert_eq!(cfg, preset(name).unwrap());
    }
    let out = freqalloc(&["preset", "fig9"], tmp.path());
    assert!(!out.status.success());
}

#[test]
fn validate_reports_derived_quantities() {
    let tmp = tempfile::tempdir().unwrap();
    freqalloc(&["preset", "fig5", "-o", "fig5.json"], tmp.path());
    let out = freqalloc(&["validate", "fig5.json"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let s = text(&out.stdout);
    assert!(s.contains("tau: 1"), "{s}");
    assert!(s.contains("stability margin 0"), "{s}");
    assert!(!s.contains("warning"));

    let mut cfg = preset("fig5").unwrap();
    cfg.alpha = 0.5;
    std::fs::write(tmp.path().join("half.json"), serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = freqalloc(&["validate", "half.json"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let s = text(&out.stdout);
    assert!(s.contains("stability margin 1.333"), "{s}");
    assert!(s.contains("warning: alpha = 0.5: stability margin"), "{s}");
}

#[test]
fn validation_failures_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (SMALL.replace("\"base_seed\": 9,", ""), "missing field `base_seed`"),
        (SMALL.replace("\"r\": 2,", "\"r\": 2, \"bands\": 3,"), "line 5 column"),
        (SMALL.replace("\"r\": 2,", "\"r\": 0,"), "r: at least one band"),
        (SMALL.replace("\"n\": 12", "\"n\": 0"), "topology.n"),
        (SMALL.replace("\"static\"", "\"relaxation\""), "horizon: required"),
        (SMALL.replace("\"replicas\": 3,", "\"replicas\": 3, \"alpha\": 2.0,"), "alpha: must lie in [0, 1]"),
    ];
    for (k, (body, needle)) in cases.iter().enumerate() {
        let name = format!("bad{k}.json");
        std::fs::write(tmp.path().join(&name), body).unwrap();
        for cmd in ["validate", "run"] {
            let out = freqalloc(&[cmd, &name], tmp.path());
            assert_eq!(out.status.code(), Some(1), "{cmd} {name}");
            let err = text(&out.stderr);
            assert!(err.contains(needle), "{name}: expected {needle:?} in {err}");
        }
    }
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn missing_files_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(freqalloc(&["run", "nope.json"], tmp.path()).status.code(), Some(3));
    assert_eq!(freqalloc(&["validate", "nope.json"], tmp.path()).status.code(), Some(3));
    let body = SMALL.replace(
        r#"{ "kind": "uniform_linear", "n": 12, "d": 1.0 }"#,
        r#"{ "kind": "file", "path": "positions.json" }"#,
    );
    std::fs::write(tmp.path().join("file.json"), body).unwrap();
    assert_eq!(freqalloc(&["run", "file.json"], tmp.path()).status.code(), Some(3));
    // output directory blocked by a plain file
    std::fs::write(tmp.path().join("out"), "").unwrap();
    std::fs::write(tmp.path().join("small.json"), SMALL).unwrap();
    assert_eq!(freqalloc(&["run", "small.json"], tmp.path()).status.code(), Some(3));
}

#[test]
fn run_writes_stable_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("small.json"), SMALL).unwrap();
    let out = freqalloc(&["run", "small.json"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let dir = tmp.path().join("out/small");
    let read = |f: &str| std::fs::read(dir.join(f)).unwrap();
    let first: Vec<Vec<u8>> = ["trace.csv", "summary.json", "config.json", "series.csv"].map(read).to_vec();

    let trace = text(&first[0]);
    assert!(!trace.contains('\r'));
    let mut lines = trace.lines();
    assert_eq!(
        lines.next(),
        Some("replica,event_index,time,cluster,old_band,new_band,aggregate_interference,active_count")
    );
    assert!(lines.next().unwrap().starts_with("0,0,0.0000000000000000e0,,,,"));
    assert!(trace.lines().last().unwrap().starts_with("2,"));

    let summary: serde_json::Value = serde_json::from_slice(&first[1]).unwrap();
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["code_version"], "freqalloc 0.1.0");
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    let point = &summary["results"][0];
    assert_eq!(point["replicas"].as_array().unwrap().len(), 3);
    // twelve clusters and two bands: the bound report uses the exhaustive optimum
    assert_eq!(point["replicas"][0]["bounds"]["i_o_source"], "exhaustive");
    let echo: serde_json::Value = serde_json::from_slice(&first[2]).unwrap();
    assert_eq!(echo["base_seed"], 9);
    assert_eq!(echo["link"]["noise_power"], 0.1);

    let again = freqalloc(&["run", "small.json"], tmp.path());
    assert!(again.status.success());
    let second: Vec<Vec<u8>> = ["trace.csv", "summary.json", "config.json", "series.csv"].map(read).to_vec();
    assert_eq!(first, second);

    let moved = tmp.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_freqalloc"))
        .args(["run", "small.json"])
        .current_dir(tmp.path())
        .env(OUT_DIR_ENV, &moved)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read(moved.join("summary.json")).unwrap(), first[1]);
}

#[test]
fn non_convergence_leaves_a_failure_record() {
    let tmp = tempfile::tempdir().unwrap();
    let body = SMALL
        .replace("\"replicas\": 3,", "\"replicas\": 2, \"max_updates\": 2,")
        .replace("\"n\": 12", "\"n\": 40");
    std::fs::write(tmp.path().join("guard.json"), body).unwrap();
    let out = freqalloc(&["run", "guard.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("non_convergence"));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("out/small/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "failed");
    let failures = summary["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 2);
    assert_eq!(failures[1]["kind"], "non_convergence");
    assert_eq!(failures[1]["replica"], 1);
}

#[test]
fn file_topology_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let top = freqalloc_core::topology::make_hexagonal_lattice(3, 3, 1.0).unwrap();
    std::fs::write(tmp.path().join("positions.json"), top.to_json()).unwrap();
    let body = SMALL
        .replace(
            r#"{ "kind": "uniform_linear", "n": 12, "d": 1.0 }"#,
            r#"{ "kind": "file", "path": "positions.json" }"#,
        )
        .replace("\"r\": 2", "\"r\": 3");
    std::fs::write(tmp.path().join("file.json"), body).unwrap();
    let v = freqalloc(&["validate", "file.json"], tmp.path());
    assert!(text(&v.stdout).contains("clusters: 9"), "{}", text(&v.stdout));
    let out = freqalloc(&["run", "file.json"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
}

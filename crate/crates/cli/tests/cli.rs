use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aubrykit"))
        .args(args)
        .current_dir(cwd)
        .env("AUBRYKIT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn scalar_minimizer_is_half() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["minimize", "--potential", "fk", "--k", "1", "--p", "1", "--q", "0", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("o/minimize.json"));
    let m = &v["result"]["minimizer"];
    // V'(x) = -(1/4π) sin 2πx vanishes at 1/2 with V''(1/2) = 1/2 > 0
    let x = m["config"]["values"][0].as_f64().unwrap();
    assert!((x - 0.5).abs() < 1e-10, "x = {x}");
    let w = m["W"].as_f64().unwrap();
    assert!((w + 1.0 / (8.0 * PI * PI)).abs() < 1e-12);
    assert_eq!(m["index"], 0);
    assert_eq!(v["aubrykit_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["scenario_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn malformed_scenario_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "p = \"3\"\nq = [\n").unwrap();
    std::fs::write(dir.path().join("unknown.toml"), "p = \"3\"\nq = \"-1\"\ncolour = 1\n").unwrap();
    for file in ["bad.toml", "unknown.toml", "missing.toml"] {
        let out = run(&["minimize", "--scenario", file, "--out", "o"], dir.path());
        assert_eq!(out.status.code(), Some(2), "{file}");
        assert!(!dir.path().join("o").exists(), "{file} left artifacts");
    }
    let out = run(&["flow", "--p", "2,0;0", "--q", "0,0", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn numerical_failure_exits_3_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    // the free chain has a degenerate family of minimizers
    let out = run(&["ghost-circle", "--potential", "free", "--p", "2", "--q", "-1", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let names: Vec<String> =
        std::fs::read_dir(dir.path().join("o")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names, vec!["diagnostic.json".to_string()]);
    let v = read_json(&dir.path().join("o/diagnostic.json"));
    assert_eq!(v["result"]["status"], "numerical_failure");
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.toml"),
        "p = \"3\"\nq = \"-1\"\nseed = 5\n[potential]\nkind = \"fk\"\nk = 0.7\n[options]\ngrid = 16\n",
    )
    .unwrap();
    for o in ["a", "b"] {
        let out = run(&["ghost-circle", "--scenario", "s.toml", "--out", o], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["ghost_circle.json", "t_map.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let csv = std::fs::read_to_string(dir.path().join("a/t_map.csv")).unwrap();
    let hash = read_json(&dir.path().join("a/ghost_circle.json"))["scenario_hash"].as_str().unwrap().to_string();
    assert!(csv.lines().next().unwrap().ends_with(&hash));

    // flags override the file and change the hash
    let out = run(&["ghost-circle", "--scenario", "s.toml", "--k", "0.8", "--out", "c"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let other = read_json(&dir.path().join("c/ghost_circle.json"));
    assert_ne!(other["scenario_hash"].as_str().unwrap(), hash);
}

#[test]
fn floats_use_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["flow", "--k", "1", "--p", "2", "--q", "-1", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("o/flow.json")).unwrap();
    let line = text.lines().find(|l| l.contains("\"dissipation\"")).unwrap();
    let num = line.split(':').nth(1).unwrap().trim().trim_end_matches(',');
    let mantissa = num.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
    assert_eq!(mantissa.len(), 17, "{num}");
    let v = read_json(&dir.path().join("o/flow.json"));
    assert!(v["result"]["energy_identity_residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn standard_map_reproduces_periodic_orbit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["standard-map", "--k", "0.9", "--p", "3", "--q", "-1", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = read_json(&dir.path().join("o/standard_map.json"));
    let r = &v["result"];
    assert!(r["orbit"]["step_residual"].as_f64().unwrap() <= 1e-9);
    assert!(r["orbit"]["lifted_deviation_mod1"].as_f64().unwrap() <= 1e-7);
    assert_eq!(r["invariant_curves"]["percival_bound"], "63/64");
    let csv = std::fs::read_to_string(dir.path().join("o/standard_map.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("i,x_lift,x_mod1,y"));
    assert_eq!(csv.lines().count(), 2 + 300);
}

#[test]
fn verify_quick_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--quick", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("o/verify.json"));
    assert_eq!(v["result"]["passed"], v["result"]["total"]);
    assert_eq!(v["result"]["suites"].as_array().unwrap().len(), 7);
}

#[test]
fn thread_cap_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_aubrykit"))
        .args(["minimize", "--p", "1", "--q", "0", "--out", "o"])
        .current_dir(dir.path())
        .env("AUBRYKIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("o").exists());
}

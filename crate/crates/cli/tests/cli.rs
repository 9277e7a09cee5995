use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_infdelay"))
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn read_config(name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(bundled(name)).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().env_remove("INFDELAY_THREADS").args(args).output().unwrap()
}

fn small_convergence() -> Value {
    let mut cfg = read_config("two_regime_convergence.json");
    cfg["scheme"]["t_final"] = json!(1.0);
    cfg["experiment"]["paths"] = json!(16);
    cfg["experiment"]["dt_list"] = json!([0.0625, 0.03125]);
    cfg["experiment"]["dt_ref"] = json!(0.015625);
    cfg
}

#[test]
fn spectrum_prints_certificate() {
    let out = run(&["spectrum", "--config", bundled("two_regime_stability.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let eta = report["eta_gamma"].as_f64().unwrap();
    assert!((eta - 0.0308).abs() < 5e-4, "eta_gamma = {eta}");
    assert_eq!(report["condition_flags"]["eta_positive"], json!(true));
}

#[test]
fn missing_config_names_path() {
    let out = run(&["spectrum", "--config", "/no/such/dir/example.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/dir/example.json"));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(run(&["spectrum", "--bogus"]).status.code(), Some(64));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(run(&[]).status.code(), Some(64));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn non_nested_steps_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_convergence();
    cfg["experiment"]["dt_list"] = json!([0.0625, 0.05]);
    let path = write_config(dir.path(), "bad.json", &cfg);
    let out = run(&["converge", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn converge_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "conv.json", &small_convergence());
    let out_dir = dir.path().join("results");
    let out = run(&["converge", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("slope="));
    let csv = fs::read_to_string(out_dir.join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("dt,log2_dt,k,rms_error"));
    assert_eq!(csv.lines().count(), 3);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("convergence.json")).unwrap()).unwrap();
    assert_eq!(summary["n_paths"], json!(16));
    assert_eq!(summary["truncation_violations"], json!(0));
}

#[test]
fn simulate_is_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_convergence();
    cfg["scheme"]["l"] = json!(64);
    cfg["scheme"]["k"] = json!(2);
    cfg["scheme"]["record_every"] = json!(4);
    let path = write_config(dir.path(), "sim.json", &cfg);
    let sim = |seed: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = run(&["simulate", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--seed", seed]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read_to_string(out_dir.join("trajectory.csv")).unwrap()
    };
    let a = sim("11", "a");
    assert_eq!(a.lines().next(), Some("t,x1,regime"));
    assert_eq!(a.lines().count(), 1 + 64 / 4 + 1);
    assert_eq!(a, sim("11", "b"));
    assert_ne!(a, sim("12", "c"));
}

#[test]
fn stability_output_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = read_config("two_regime_stability.json");
    cfg["scheme"]["l"] = json!(64);
    cfg["scheme"]["record_every"] = json!(8);
    cfg["scheme"]["t_final"] = json!(4.0);
    cfg["experiment"]["paths"] = json!(24);
    let path = write_config(dir.path(), "stab.json", &cfg);
    let go = |threads: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = bin()
            .env("INFDELAY_THREADS", threads)
            .args(["stability", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
            .args(["--fit-window", "1,4"])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("window=[1, 4]"));
        (
            fs::read_to_string(out_dir.join("stability.csv")).unwrap(),
            fs::read_to_string(out_dir.join("exponents.csv")).unwrap(),
        )
    };
    let one = go("1", "t1");
    assert_eq!(one.0.lines().count(), 1 + 4 * 64 / 8 + 1);
    assert_eq!(one, go("3", "t3"));
}

#[test]
fn blow_up_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "model": {
            "regimes": [{"drift": [{"type": "point_power", "coeff": 1.0, "exponent": 3.0}]}],
            "growth": {"d5": 1.0, "variant": "constant"}
        },
        "initial_data": {"kind": "constant", "value": 10.0},
        "chain": {"generator": [[0.0]]},
        "scheme": {"l": 1, "k": 1, "lambda": 0.5, "variant": "convergence", "t_final": 10.0}
    });
    let path = write_config(dir.path(), "boom.json", &cfg);
    let out = run(&["simulate", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerical"));
}

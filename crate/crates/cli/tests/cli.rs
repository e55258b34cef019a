use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn jsqlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jsqlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn pde_check_passes_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pde.json");
    let o = jsqlab(&[
        "verify-pde",
        "--n",
        "100",
        "--beta",
        "1",
        "--kappa",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = read_json(&out);
    assert_eq!(r["pass"], true);
    assert_eq!(r["config"]["tol"], 1e-8);
    for f in r["results"]["fields"].as_array().unwrap() {
        assert!(f["max_residual"].as_f64().unwrap() <= 1e-8);
    }
    let csv = std::fs::read_to_string(dir.path().join("pde.csv")).unwrap();
    assert!(csv.starts_with("# "));
}

#[test]
fn single_server_second_level_mean() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exact.json");
    let o = jsqlab(&[
        "solve-exact",
        "--n",
        "1",
        "--beta",
        "0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = read_json(&out);
    let eq2 = r["results"]["distribution"]["mean_levels"][1]
        .as_f64()
        .unwrap();
    assert!((eq2 - 0.25).abs() <= 1e-9, "{eq2}");
}

#[test]
fn kappa_not_above_beta_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"model.n": 100, "model.beta": 1.0, "kappa": 1.0}"#).unwrap();
    let o = jsqlab(&["verify-pde", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let rec: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(rec["error"]["code"], "PARAM_ORDER");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"kappa": 1.0, "grid": "-1:0:5,0:1:5"}"#).unwrap();
    let out = dir.path().join("r.json");
    let o = jsqlab(&[
        "verify-pde",
        "--config",
        cfg.to_str().unwrap(),
        "--kappa",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&out);
    assert_eq!(r["config"]["kappa"], 3.0);
    assert_eq!(r["config"]["grid"], "-1:0:5,0:1:5");
}

#[test]
fn unknown_config_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"kapa": 2.0}"#).unwrap();
    let o = jsqlab(&["gamma-table", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exact_solver_size_limit_is_a_config_error() {
    let o = jsqlab(&["solve-exact", "--n", "50"]);
    assert_eq!(o.status.code(), Some(2));
    let rec: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(rec["error"]["code"], "INVALID_PARAMETER");
}

#[test]
fn failed_check_exits_one() {
    // A grid tolerance of zero cannot be met by floating-point residuals.
    let o = jsqlab(&["verify-pde", "--tol", "0", "--fields", "excess"]);
    assert_eq!(o.status.code(), Some(1));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["pass"], false);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<(String, String)> = ["a", "b"]
        .iter()
        .map(|tag| {
            let out = dir.path().join(format!("{tag}.json"));
            let o = jsqlab(&[
                "simulate-ctmc",
                "--n",
                "10",
                "--horizon",
                "600",
                "--burn-in",
                "100",
                "--seed",
                "9",
                "--out",
                out.to_str().unwrap(),
            ]);
            assert!(matches!(o.status.code(), Some(0 | 1)));
            (
                std::fs::read_to_string(&out).unwrap(),
                std::fs::read_to_string(out.with_extension("csv")).unwrap(),
            )
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    let r: Value = serde_json::from_str(&runs[0].0).unwrap();
    assert_eq!(r["seed"], 9);
    assert_eq!(r["config"]["trunc-b"], 12);
}

#[test]
fn thread_cap_is_validated_and_echoed() {
    let o = Command::new(env!("CARGO_BIN_EXE_jsqlab"))
        .args(["gamma-table"])
        .env("JSQLAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_jsqlab"))
        .args(["gamma-table"])
        .env("JSQLAB_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["config"]["threads"], 4);
}

#[test]
fn drift_scan_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("drift.json");
    let o = jsqlab(&[
        "verify-drift",
        "--scan-alpha",
        "0.05,0.1",
        "--scan-points",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[1], "alpha,kappa1,kappa2,c,d,pass");
    assert_eq!(lines.len(), 4);
}

#[test]
fn clap_rejects_unknown_flag() {
    let o = jsqlab(&["verify-pde", "--nope"]);
    assert_eq!(o.status.code(), Some(2));
}

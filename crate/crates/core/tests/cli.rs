use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn netsaddle(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_netsaddle"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const QUADRATIC: &str = r#"
version = 1
seed = 4

[scenario]
kind = "quadratic"
game = { a = [[-1.0]], b = [[2.0]], c = [[1.0]], l1 = [1.0], l2 = [-0.5] }
first = { n = 3, edges = [[0, 1, 1.0], [1, 2, 1.0]], undirected = true }
second = { n = 2, edges = [[0, 1, 1.0]], undirected = true }
bounds1 = [-4.0, 4.0]
bounds2 = [-4.0, 4.0]

[integrator]
horizon = 60.0
"#;

#[test]
fn example1_run_reaches_the_published_x_limit() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("example1.toml");
    let out = tmp.path().join("ex1");
    let (code, err) = netsaddle(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let s = summary(&out);
    assert_eq!(s["status"], "ok");
    assert_eq!(s["schema_version"], 1);
    let x = s["trajectory"]["consensus_first"].as_array().unwrap();
    assert!((x[0].as_f64().unwrap() - 1.3371).abs() < 1e-3);
    assert!((x[1].as_f64().unwrap() - 1.0315).abs() < 1e-3);
    assert_eq!(s["trajectory"]["lyapunov_violations"], 0);
    for f in ["trajectory.csv", "design.json", "plots/x1.csv", "plots/z2.csv", "plots/diagnostics.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn unstable_directed_cycle_exits_with_divergence() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("zero-payoff-5cycle.toml");
    let out = tmp.path().join("zero");
    let (code, _) = netsaddle(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3);
    let s = summary(&out);
    assert_eq!(s["status"], "diverged");
    assert!(s["diverged_at"].as_f64().unwrap() < 50.0);
    assert!(out.join("trajectory.csv").exists());
}

#[test]
fn negative_step_is_a_config_error_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "bad.toml", &QUADRATIC.replace("horizon = 60.0", "h = -0.01"));
    let out = tmp.path().join("bad");
    let (code, err) = netsaddle(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("h must be positive"), "{err}");
    let s = summary(&out);
    assert_eq!(s["status"], "config-error");
    assert!(s["message"].as_str().unwrap().contains("h must be positive"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("missing");
    let (code, _) = netsaddle(&["run", "--config", "/nonexistent.toml", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert_eq!(summary(&out)["status"], "config-error");
}

#[test]
fn too_small_k_fails_cocoercivity_verification() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "q.toml", QUADRATIC);
    let out = tmp.path().join("coco");
    let args = |k: &str| {
        vec![
            "verify".to_string(),
            "cocoercivity".to_string(),
            "--config".to_string(),
            cfg.clone(),
            "--out".to_string(),
            out.to_str().unwrap().to_string(),
            "--override".to_string(),
            "flow.k_source=explicit".to_string(),
            "--override".to_string(),
            format!("flow.k_value={k}"),
        ]
    };
    let run = |k: &str| {
        let a = args(k);
        netsaddle(&a.iter().map(String::as_str).collect::<Vec<_>>()).0
    };
    assert_eq!(run("0.05"), 4);
    assert_eq!(summary(&out)["status"], "verification-failed");
    assert_eq!(run("10.0"), 0);
}

#[test]
fn undirected_quadratic_run_and_saddle_check() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "q.toml", QUADRATIC);
    let out = tmp.path().join("q");
    let o = out.to_str().unwrap();
    assert_eq!(netsaddle(&["run", "--config", &cfg, "--out", o]).0, 0);
    let s = summary(&out);
    assert_eq!(s["reference"], "analytic");
    assert_eq!(netsaddle(&["verify", "saddle", "--config", &cfg, "--out", o]).0, 0);
    assert_eq!(netsaddle(&["verify", "gradients", "--config", &cfg, "--out", o]).0, 0);
}

#[test]
fn identical_config_and_seed_replay_bitwise() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "q.toml", QUADRATIC);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let code = netsaddle(&["run", "--config", &cfg, "--out", dir.to_str().unwrap(), "--seed", "11"]).0;
        assert_eq!(code, 0);
    }
    assert_eq!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(b.join("trajectory.csv")).unwrap());
}

#[test]
fn design_reports_for_two_path_networks() {
    let tmp = TempDir::new().unwrap();
    let text = r#"
version = 1
[scenario]
kind = "zero-payoff"
first = { n = 2, edges = [[0, 1, 1.0]], undirected = true }
second = { n = 2, edges = [[0, 1, 1.0]], undirected = true }
[flow]
kind = "directed"
alpha_source = "designed-auto"
k_source = "explicit"
k_value = 1.0
"#;
    let cfg = write_config(&tmp, "d.toml", text);
    let out = tmp.path().join("d");
    assert_eq!(netsaddle(&["design", "--config", &cfg, "--out", out.to_str().unwrap()]).0, 0);
    let d: Value = serde_json::from_str(&fs::read_to_string(out.join("design.json")).unwrap()).unwrap();
    assert!((d["lambda_star_min"].as_f64().unwrap() - 4.0).abs() < 1e-12);
    let beta_star = d["beta_star"].as_f64().unwrap();
    assert!((beta_star - 1.1933744184825859).abs() < 1e-8, "{beta_star}");
    assert!(d["h_at_beta"].as_f64().unwrap() < 0.0);
    let beta = d["beta"].as_f64().unwrap();
    assert!((d["alpha"].as_f64().unwrap() - (beta * beta + 2.0) / beta).abs() < 1e-12);
}

#[test]
fn quadratic_design_with_analytic_k() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("quadratic-designed.toml");
    let out = tmp.path().join("qd");
    assert_eq!(netsaddle(&["design", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 0);
    let d: Value = serde_json::from_str(&fs::read_to_string(out.join("design.json")).unwrap()).unwrap();
    for key in ["lambda_star_min", "K", "beta_star", "beta", "alpha"] {
        assert!(d[key].as_f64().unwrap() > 0.0, "{key}");
    }
    assert!(d["h_at_beta"].as_f64().unwrap() < 0.0);
}

#[test]
fn explicit_alpha_design_is_echoed() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("example1.toml");
    let out = tmp.path().join("e");
    assert_eq!(netsaddle(&["design", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 0);
    let d: Value = serde_json::from_str(&fs::read_to_string(out.join("design.json")).unwrap()).unwrap();
    assert_eq!(d["source"], "explicit");
    assert_eq!(d["alpha"], 3.0);
}

#[test]
fn sweep_runs_every_combination() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "q.toml", QUADRATIC);
    let out = tmp.path().join("sweep");
    let (code, err) = netsaddle(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--vary",
        "integrator.h=1e-3,2e-3",
        "--vary",
        "scenario.game.l1=[1.0],[-1.0]",
    ]);
    assert_eq!(code, 0, "{err}");
    let s = summary(&out);
    assert!(out.join("run-003/trajectory.csv").exists());
    let runs = s["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 4);
    assert!(runs.iter().all(|r| r["status"] == "ok"));
}

#[test]
fn unknown_subcommand_is_rejected() {
    assert_eq!(netsaddle(&["frobnicate"]).0, 2);
}

//! End-to-end checks of the command-line interface: file formats, exit
//! codes, and the gen → solve → certify → landscape-check → sweep chain.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ampscape"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("spawn ampscape");
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn gen_solve_certify_landscape_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("inst");
    let prefix = prefix.to_str().unwrap();
    run_ok(&[
        "gen", "--d", "6", "--n", "48", "--field", "real", "--dist", "gaussian", "--seed", "3",
        "--out", prefix,
    ]);
    assert!(Path::new(&format!("{prefix}_F.csv")).exists());
    assert!(Path::new(&format!("{prefix}_truth.csv")).exists());
    assert!(Path::new(&format!("{prefix}_obs.csv")).exists());

    let sol = dir.path().join("sol");
    let sol = sol.to_str().unwrap();
    let stdout = run_ok(&[
        "solve", "--loss", "amplitude", "--method", "factored", "--p", "2", "--seed", "1",
        "--in", prefix, "--out", sol,
    ]);
    assert!(stdout.contains("\"certified\": true"), "solve output: {stdout}");
    let iters = std::fs::read_to_string(format!("{sol}_iters.csv")).unwrap();
    assert!(iters.starts_with("iter,objective,grad_norm,step_size\n"));

    let cert_out = run_ok(&[
        "certify", "--loss", "amplitude", "--in", prefix, "--x", &format!("{sol}_X.csv"),
        "--seed", "5",
    ]);
    assert!(cert_out.contains("\"certified\": true"), "certify output: {cert_out}");

    let report = run_ok(&[
        "landscape-check", "--theorem", "amplitude", "--in", prefix,
        "--x", &format!("{sol}_X.csv"), "--seed", "9",
    ]);
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "theorem,seed,d,n,p,field,loss,delta,lambda,lhs,rhs,slack,grad_norm,min_curvature,nuclear_error,vector_error"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 16);
    assert_eq!(row[0], "amplitude");
    let slack: f64 = row[11].parse().unwrap();
    assert!(slack >= -1e-6, "slack column: {slack}");
}

#[test]
fn solve_phasecut_via_cli() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("pc");
    let prefix = prefix.to_str().unwrap();
    run_ok(&[
        "gen", "--d", "5", "--n", "40", "--field", "complex", "--dist", "complex-gaussian",
        "--seed", "11", "--out", prefix,
    ]);
    let sol = dir.path().join("sol");
    let sol = sol.to_str().unwrap();
    let stdout = run_ok(&[
        "solve", "--loss", "amplitude", "--method", "phasecut", "--p", "2", "--seed", "2",
        "--in", prefix, "--out", sol,
    ]);
    assert!(stdout.contains("\"certified\": true"), "phasecut solve: {stdout}");
    // recovered X has the ambient dimension
    let x = std::fs::read_to_string(format!("{sol}_X.csv")).unwrap();
    assert!(x.starts_with("# 5,2,complex\n"), "X header: {}", x.lines().next().unwrap());
}

#[test]
fn exit_codes() {
    // argument errors → 1
    let out = bin().args(["solve", "--loss", "nosuch", "--p", "2", "--in", "x", "--out", "y"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    // i/o errors → 2
    let out = bin()
        .args(["solve", "--loss", "amplitude", "--p", "2", "--in", "/nonexistent/prefix", "--out", "/tmp/x"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // help → 0
    let out = bin().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn sweep_from_config_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out_prefix = dir.path().join("sweep");
    let config = serde_json::json!({
        "ensemble": {"d": 5, "n": 30, "field": "real", "dist": {"kind": "gaussian_iid"}},
        "truth": {"rank": 1, "norm": 1.0, "style": "gaussian"},
        "loss": "amplitude",
        "method": "factored",
        "noise_grid": [0.0, 0.05],
        "p_grid": [2],
        "lambda_grid": [0.0],
        "trials": 2,
        "base_seed": 77,
        "output_path": out_prefix.to_str().unwrap(),
    });
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    run_ok(&["sweep", "--config", cfg_path.to_str().unwrap()]);
    let csv1 = std::fs::read(format!("{}.csv", out_prefix.display())).unwrap();
    run_ok(&["sweep", "--config", cfg_path.to_str().unwrap()]);
    let csv2 = std::fs::read(format!("{}.csv", out_prefix.display())).unwrap();
    assert_eq!(csv1, csv2, "sweep reruns must be byte-identical");

    let text = String::from_utf8(csv1).unwrap();
    assert!(text.starts_with("theorem,seed,d,n,p,field,loss,delta,lambda,lhs,rhs,slack,grad_norm,min_curvature,nuclear_error,vector_error,sigma,certified,iterations,clamped_count\n"));
    assert_eq!(text.lines().count(), 1 + 4, "2 grid points x 2 trials");

    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(format!("{}_summary.json", out_prefix.display())).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["slack_violations"], 0);
    assert_eq!(summary["total_rows"], 4);
}

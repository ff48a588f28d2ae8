//! Binary-level contract tests: exit codes, output shapes, and the
//! sensitivity controls of the verify subcommand.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_endow-opt"));
    cmd.env_remove("ENDOW_OPT_THREADS");
    cmd
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn small_config(extra: &str) -> String {
    format!(
        r#"{{
        "market": {{ "r": 0.02, "lambda_excess": 0.04, "sigma": 0.2 }},
        "endowment": {{ "mu": 0.03, "eta": 0.1, "e0": 0.5 }},
        "agent": {{ "gamma": 3.0, "x0": 1.0, "horizon_T": 10.0 }},
        "grid": {{ "n_steps": 32, "n_paths": 500, "seed": 3 }}{extra}
    }}"#
    )
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn price_csv_matches_quadrature_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config(", \"price\": { \"n_points\": 5 }"));
    let out = run(&["price", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,P");

    // Composite-Simpson oracle for P_t = ∫0^t e0 e^{kappa s} ds.
    let kappa = 0.03 - 0.02 - 0.1 * (0.04 / 0.2);
    let quadrature = |t: f64| {
        let n = 4000;
        let h = t / n as f64;
        let f = |s: f64| 0.5 * (kappa * s).exp();
        let mut acc = f(0.0) + f(t);
        for i in 1..n {
            acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let mut rows = 0;
    for line in lines {
        let mut cols = line.split(',');
        let t: f64 = cols.next().unwrap().parse().unwrap();
        let p: f64 = cols.next().unwrap().parse().unwrap();
        let oracle = quadrature(t);
        assert!((p - oracle).abs() <= 1e-12 * oracle.max(1.0), "t={t}");
        rows += 1;
    }
    assert_eq!(rows, 5);
}

#[test]
fn price_at_zero_is_zero_and_kappa_zero_is_linear() {
    let dir = tempfile::tempdir().unwrap();
    // mu = r + eta*theta makes kappa vanish; the price column is e0*t.
    let config = write_config(
        dir.path(),
        r#"{
        "market": { "r": 0.0, "lambda_excess": 0.04, "sigma": 0.2 },
        "endowment": { "mu": 0.01, "eta": 0.05, "e0": 1.0 },
        "agent": { "gamma": 2.0, "x0": 1.0, "horizon_T": 1.0 },
        "grid": { "n_steps": 8, "n_paths": 8, "seed": 1 },
        "price": { "n_points": 3 }
    }"#,
    );
    let out = run(&["price", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let mut cols = l.split(',');
            (
                cols.next().unwrap().parse().unwrap(),
                cols.next().unwrap().parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(rows[0], (0.0, 0.0));
    for (t, p) in rows {
        assert!((p - t).abs() < 1e-12);
    }
}

#[test]
fn strategy_surface_has_constant_column_when_shift_scale_vanishes() {
    let dir = tempfile::tempdir().unwrap();
    // theta = gamma*eta exactly: pi* = pi_M in every row.
    let config = write_config(
        dir.path(),
        r#"{
        "market": { "r": 0.0, "lambda_excess": 0.05, "sigma": 0.25 },
        "endowment": { "mu": 0.0, "eta": 0.1, "e0": 1.0 },
        "agent": { "gamma": 2.0, "x0": 1.0, "horizon_T": 2.0 },
        "grid": { "n_steps": 8, "n_paths": 8, "seed": 1 },
        "surface": { "n_times": 4, "ratios": [0.0, 0.5, 2.0] }
    }"#,
    );
    let out = run(&["strategy", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "t,ratio,beta,pi_merton,shift_scale,pi_star"
    );
    for line in text.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let (ratio, pi_merton, shift_scale, pi_star) = (cols[1], cols[3], cols[4], cols[5]);
        assert_eq!(shift_scale, 0.0);
        assert_eq!(pi_star, pi_merton);
        // ratio = 0 rows collapse to pi_M regardless of shift.
        if ratio == 0.0 {
            assert_eq!(pi_star, pi_merton);
        }
    }
}

#[test]
fn simulate_writes_summary_and_dump_with_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &small_config(r#", "simulate": { "dump": "paths.csv" }"#),
    );
    let out_path = dir.path().join("summary.json");
    let out = bin()
        .args([
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(summary["grid"]["seed"], 3);
    assert!(summary["rng"].as_str().unwrap().contains("ChaCha12"));
    assert_eq!(summary["strategy"]["kind"], "optimal");
    assert!(summary["terminal_wealth"]["mean"].as_f64().unwrap() > 0.0);
    assert!(summary["replication_rel_rms"].as_f64().unwrap() < 0.05);

    let dump = std::fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    let mut lines = dump.lines();
    assert_eq!(lines.next().unwrap(), "path,t,W,E,H,X");
    // 500 paths x 33 grid points.
    assert_eq!(dump.lines().count(), 1 + 500 * 33);
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[1], "0");
    assert_eq!(first[2], "0");
    assert_eq!(first[4], "1"); // H_0 = 1
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config(""));
    let a = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    let b = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    let a_json: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let b_json: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    assert_eq!(a_json["grid"]["seed"], 99);
    assert_eq!(b_json["grid"]["seed"], 3);
    assert_ne!(
        a_json["terminal_wealth"]["mean"].as_f64(),
        b_json["terminal_wealth"]["mean"].as_f64()
    );
}

#[test]
fn exit_code_contract() {
    let dir = tempfile::tempdir().unwrap();

    // 1: validation error (gamma = 1 rejected with its code).
    let config = write_config(
        dir.path(),
        r#"{
        "market": { "r": 0.0, "lambda_excess": 0.0, "sigma": 0.2 },
        "endowment": { "mu": 0.0, "eta": 0.1, "e0": 1.0 },
        "agent": { "gamma": 1.0, "x0": 1.0, "horizon_T": 1.0 },
        "grid": { "n_steps": 8, "n_paths": 8, "seed": 1 }
    }"#,
    );
    let out = run(&["price", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("GammaExcluded"));

    // 1: config with unknown key.
    let config = write_config(
        dir.path(),
        &small_config(", \"unknown_block\": {}"),
    );
    let out = run(&["price", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    // 3: missing config file.
    let out = run(&["price", "--config", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    // 4: overflow guard (|kappa|*T far beyond exp range).
    let config = write_config(
        dir.path(),
        r#"{
        "market": { "r": 0.0, "lambda_excess": 0.0, "sigma": 0.2 },
        "endowment": { "mu": 100.0, "eta": 0.1, "e0": 1.0 },
        "agent": { "gamma": 2.0, "x0": 1.0, "horizon_T": 20.0 },
        "grid": { "n_steps": 8, "n_paths": 8, "seed": 1 }
    }"#,
    );
    let out = run(&["price", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("overflow"));

    // 3: unwritable output path.
    let config = write_config(dir.path(), &small_config(""));
    let out = run(&[
        "price",
        "--config",
        config.to_str().unwrap(),
        "--out",
        "/nonexistent-dir/out.csv",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_passes_at_small_scale_and_fails_when_tampered() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &small_config(r#", "verify": { "ladder": [8, 16, 32] }"#),
    );

    let out = run(&["verify", "--config", config.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(0), "report: {report}");
    assert_eq!(report["overall_pass"], true);
    assert!(report["rng"].as_str().unwrap().contains("ChaCha12"));

    // Tampered multiplier: foc and duality must fail, exit code 2.
    let out = run(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--debug-lambda-scale",
        "1.01",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["overall_pass"], false);
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"foc"));
    assert!(failed.contains(&"duality_gap_exact"));
}

#[test]
fn verify_rejects_csv_format() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config(""));
    let out = run(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_rejects_empty_axis_and_emits_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &small_config(r#", "sweep": { "axes": [ { "axis": "eta", "values": [] } ] }"#),
    );
    let out = run(&["sweep", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let config = write_config(
        dir.path(),
        &small_config(
            r#", "sweep": { "axes": [ { "axis": "T", "values": [0.001, 5.0, 10.0] } ] }"#,
        ),
    );
    let out = run(&["sweep", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "gamma,eta,theta,e0,T,pi_merton,shift_scale,beta0,p_terminal,primal_value"
    );
    // Short horizon: beta(0) -> 0, so the available shift collapses.
    let first: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    assert!(first[7] < 0.0011, "beta0 = {}", first[7]);
    assert_eq!(text.lines().count(), 1 + 3);
}

#[test]
fn threads_env_var_is_honored_and_result_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config(""));
    let via_env = bin()
        .args(["simulate", "--config", config.to_str().unwrap()])
        .env("ENDOW_OPT_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(via_env.status.code(), Some(0));
    let via_flag = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    assert_eq!(via_env.stdout, via_flag.stdout);
}

#[test]
fn verify_reports_overflow_as_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
        "market": { "r": 0.0, "lambda_excess": 0.0, "sigma": 0.2 },
        "endowment": { "mu": 1000.0, "eta": 0.1, "e0": 1.0 },
        "agent": { "gamma": 2.0, "x0": 1.0, "horizon_T": 10.0 },
        "grid": { "n_steps": 8, "n_paths": 8, "seed": 1 }
    }"#,
    );
    let out = run(&["verify", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn sweep_welfare_column_reproduces_dominance_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
        "market": { "r": 0.02, "lambda_excess": 0.04, "sigma": 0.2 },
        "endowment": { "mu": 0.03, "eta": 0.1, "e0": 0.5 },
        "agent": { "gamma": 3.0, "x0": 1.0, "horizon_T": 10.0 },
        "grid": { "n_steps": 128, "n_paths": 20000, "seed": 17 },
        "sweep": {
            "axes": [ { "axis": "e0", "values": [0.25, 0.5, 1.0] } ],
            "merton_welfare_mc": true
        }
    }"#,
    );
    let out = run(&["sweep", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines
        .next()
        .unwrap()
        .ends_with("merton_welfare_mc,merton_welfare_se"));
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let (primal, welfare, se) = (cols[9], cols[10], cols[11]);
        assert!(
            primal >= welfare - 3.0 * se,
            "optimal welfare must dominate the Merton challenger: {line}"
        );
    }
}

#[test]
fn sweep_json_round_trips_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &small_config(r#", "sweep": { "axes": [ { "axis": "gamma", "values": [2.0, 4.0] } ] }"#),
    );
    let out = run(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["gamma"], 2.0);
    assert_eq!(rows[1]["gamma"], 4.0);
}

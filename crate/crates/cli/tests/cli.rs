use std::path::PathBuf;
use std::process::{Command, Output};

use gelbrich_core::backtest::{synthetic, write_returns_csv};

const BALL: &str = r#"{"center":{"mean":[0.01,0.02],"cov":[[0.04,0.01],[0.01,0.09]]},"radius":0.1}"#;
const TRACKING_PROBLEM: &str = r#"{"ball":{"center":{"mean":[0.1,-0.05],"cov":[[0.5,0.1],[0.1,0.3]]},"radius":0.3},"loss":{"type":"tracking","w":[0.6,0.4],"p":2}}"#;

fn gelbrich(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gelbrich")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn scratch(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("gelbrich-cli-{}-{name}", std::process::id()))
}

#[test]
fn alpha_prints_the_coefficient() {
    let out = gelbrich(&["alpha", "--risk", "cvar:0.05", "--class", "all-l2"]);
    assert_eq!(out.status.code(), Some(0));
    let alpha: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((alpha - 19f64.sqrt()).abs() < 1e-12);
}

#[test]
fn zero_radius_risk_is_the_nominal_chebyshev_value() {
    let ball = r#"{"center":{"mean":[0.01,0.02],"cov":[[0.04,0.01],[0.01,0.09]]},"radius":0}"#;
    let report = stdout_json(&gelbrich(&["risk", "--ball", ball, "--w", "0.5,0.5", "--alpha", "2"]));
    // −wᵀμ + α√(wᵀΣw) with wᵀΣw = 0.25·(0.04 + 0.02 + 0.09)
    let expected = -0.015 + 2.0 * (0.25f64 * 0.15).sqrt();
    assert!((report["value"].as_f64().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn worst_case_moments_attain_the_reported_risk() {
    let report = stdout_json(&gelbrich(&["risk", "--ball", BALL, "--w", "0.5,0.5", "--alpha", "2"]));
    let star = stdout_json(&gelbrich(&["worst-case", "--ball", BALL, "--w", "0.5,0.5", "--alpha", "2"]));
    let mean: Vec<f64> = serde_json::from_value(star["mean"].clone()).unwrap();
    let cov: Vec<Vec<f64>> = serde_json::from_value(star["cov"].clone()).unwrap();
    let w = [0.5, 0.5];
    let wm: f64 = w.iter().zip(&mean).map(|(a, b)| a * b).sum();
    let var: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| w[i] * cov[i][j] * w[j]).sum();
    assert!((-wm + 2.0 * var.sqrt() - report["value"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn invalid_input_exits_with_two() {
    assert_eq!(gelbrich(&["alpha", "--risk", "bogus"]).status.code(), Some(2));
    let indefinite = r#"{"center":{"mean":[0,0],"cov":[[1,2],[2,1]]},"radius":0.1}"#;
    assert_eq!(gelbrich(&["risk", "--ball", indefinite, "--w", "1,0", "--alpha", "1"]).status.code(), Some(2));
    assert_eq!(gelbrich(&["risk", "--ball", BALL, "--w", "1,0,0", "--alpha", "1"]).status.code(), Some(2));
    assert_eq!(gelbrich(&["backtest", "--data", "/nonexistent.csv", "--p", "3", "--rho-grid", "0"]).status.code(), Some(2));
}

#[test]
fn optimizer_iteration_cap_exits_with_three() {
    let report = stdout_json(&gelbrich(&["optimize", "--ball", BALL, "--alpha", "2"]));
    assert_eq!(report["termination"], "converged");
    let w: Vec<f64> = serde_json::from_value(report["w_star"].clone()).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9 && w.iter().all(|&x| x >= -1e-12));

    let capped = gelbrich(&["optimize", "--ball", BALL, "--alpha", "2", "--max-iter", "1"]);
    assert_eq!(capped.status.code(), Some(3));
}

#[test]
fn sdp_export_matches_the_golden_file_and_solves() {
    let path = scratch("tracking.dat-s");
    let out = gelbrich(&["sdp", "export", "--problem", TRACKING_PROBLEM, "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let golden = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/golden/tracking_n2_p2.dat-s");
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(golden).unwrap());

    let from_json = stdout_json(&gelbrich(&["sdp", "solve", "--problem", TRACKING_PROBLEM]));
    let from_file = stdout_json(&gelbrich(&["sdp", "solve", "--problem", path.to_str().unwrap()]));
    std::fs::remove_file(&path).ok();
    assert_eq!(from_json["status"], "Optimal");
    let (a, b) = (from_json["primal_value"].as_f64().unwrap(), from_file["primal_value"].as_f64().unwrap());
    assert!((a - b).abs() < 1e-9);

    assert_eq!(gelbrich(&["sdp", "solve", "--problem", TRACKING_PROBLEM, "--max-iter", "3"]).status.code(), Some(3));
}

#[test]
fn backtest_of_an_exactly_replicable_index_has_zero_error_at_zero_radius() {
    let data = scratch("replicable.csv");
    let curve = scratch("curve.csv");
    let panel = synthetic::exact_replication(100, &[0.3, 0.5, 0.2], 7);
    write_returns_csv(&panel, std::fs::File::create(&data).unwrap()).unwrap();
    let out = gelbrich(&[
        "backtest", "--data", data.to_str().unwrap(), "--p", "2", "--rho-grid", "0,0.05", "--out", curve.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&curve).unwrap();
    std::fs::remove_file(&data).ok();
    std::fs::remove_file(&curve).ok();

    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rho,avg_error"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (r, e) = l.split_once(',').unwrap();
            (r.parse().unwrap(), e.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].0, 0.0);
    assert!(rows[0].1.abs() < 1e-10, "ρ=0 error {}", rows[0].1);
    assert!(rows[1].1 > rows[0].1);
}

#[test]
fn calibrate_prints_a_ball_centered_at_the_sample_moments() {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/small.csv");
    let ball = stdout_json(&gelbrich(&["calibrate", "--data", fixture, "--eta", "0.05"]));
    let mean: Vec<f64> = serde_json::from_value(ball["center"]["mean"].clone()).unwrap();
    assert_eq!(mean.len(), 2);
    assert!(ball["radius"].as_f64().unwrap() > 0.0);
}

use std::process::{Command, Output};

use serde_json::Value;

fn heatlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatlab")).args(args).env("HEATLAB_THREADS", "1").output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json output")
}

#[test]
fn interval_index_by_boundary_condition() {
    assert_eq!(json(&heatlab(&["index", "--model", "interval", "--bc", "relative"]))["index"], -1);
    assert_eq!(json(&heatlab(&["index", "--model", "interval", "--bc", "absolute"]))["index"], 1);
}

#[test]
fn circle_fit_matches_integrated_a2() {
    let v = json(&heatlab(&["fit", "--model", "circle", "--theta", "0.7*sin(x)", "--degree", "0", "--order", "4"]));
    let row = v["table"].as_array().unwrap().iter().find(|r| r["n"] == 2).unwrap().clone();
    // ∫a_2(Δ^0) = −(4π)^{−1/2}·π·0.7²
    let closed = -(0.49 * std::f64::consts::PI) / (4.0 * std::f64::consts::PI).sqrt();
    assert!((row["integrated_a"].as_f64().unwrap() - closed).abs() < 1e-12);
    assert!((row["c"].as_f64().unwrap() - closed).abs() < 1e-4 * closed.abs());
}

#[test]
fn scan_below_critical_order_is_empty() {
    let v = json(&heatlab(&["invariance", "scan", "--m", "3", "--n", "2"]));
    assert_eq!(v["survivors"], serde_json::json!([]));
    assert_eq!(v["total"], 51);
}

#[test]
fn torus_betti_numbers() {
    let v = json(&heatlab(&["betti", "--model", "torus", "--n", "12"]));
    assert_eq!(v["betti"], serde_json::json!([1, 2, 1]));
    let v = json(&heatlab(&["betti", "--model", "torus", "--theta", "0.7", "--theta", "0", "--n", "12"]));
    assert_eq!(v["betti"], serde_json::json!([0, 0, 0]));
}

#[test]
fn heattrace_csv_has_header_and_rows() {
    let out = heatlab(&["heattrace", "--model", "circle", "--points", "5", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,trace_0,trace_1,supertrace");
    assert_eq!(lines.len(), 6);
}

#[test]
fn output_is_deterministic() {
    let a = heatlab(&["spectrum", "--model", "torus", "--theta", "0.3+0.2*cos(x)", "--theta", "0.1", "--n", "6"]);
    let b = heatlab(&["spectrum", "--model", "torus", "--theta", "0.3+0.2*cos(x)", "--theta", "0.1", "--n", "6"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(heatlab(&["index", "--model", "interval", "--bc", "mixed"]).status.code(), Some(2));
    assert_eq!(
        heatlab(&["betti", "--model", "torus", "--theta", "sin(x)", "--theta", "sin(x)"]).status.code(),
        Some(2)
    );
    assert_eq!(heatlab(&["fit", "--model", "circle", "--order", "9"]).status.code(), Some(2));
    assert_eq!(heatlab(&["index", "--model", "interval", "--theta", "1"]).status.code(), Some(2));
    assert_eq!(heatlab(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn numerical_contract_violation_exits_3() {
    // 2000 modes resolve the interval kernel too finely for the gap test
    let out = heatlab(&["index", "--model", "interval", "--n", "2000"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gap ratio"));
}

#[test]
fn config_file_runs_the_same_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    let dest = dir.path().join("out.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"command": "index", "model": "interval", "bc": "relative", "output": {:?}}}"#,
            dest.display().to_string()
        ),
    )
    .unwrap();
    let out = heatlab(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&dest).unwrap()).unwrap();
    assert_eq!(v["index"], -1);

    std::fs::write(&cfg, r#"{"command": "index", "bogus": 1}"#).unwrap();
    assert_eq!(heatlab(&["run", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn spectrum_bundle_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("circle.bin");
    let out =
        heatlab(&["spectrum", "--model", "circle", "--theta", "0.5", "--n", "4", "--bundle", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let (header, mats) = heatlab::complexes::import_bundle(&mut std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(header["N"], 4);
    // Δ^0, Δ^1, d_0
    assert_eq!(mats.len(), 3);
    assert_eq!(mats[0].1.nrows(), 9);
}

#[test]
fn single_acceptance_criterion() {
    let v = json(&heatlab(&["accept", "--id", "8"]));
    assert_eq!(v["passed"], true);
    assert_eq!(heatlab(&["accept", "--id", "99"]).status.code(), Some(2));
}

#[test]
fn gauss_bonnet_on_the_two_sphere() {
    let v = json(&heatlab(&["gaussbonnet", "--dim", "2", "--radius", "3"]));
    assert!((v["integrated_euler_form"].as_f64().unwrap() - 2.0).abs() < 1e-8);
}

#[test]
fn coefficients_at_a_point() {
    let v = json(&heatlab(&["coeffs", "--model", "circle", "--theta", "0.7*sin(x)", "--at", "0"]));
    // the supertraced densities are exact derivatives: nonzero pointwise, zero integral
    assert!(v["integrated_super"]["a2"].as_f64().unwrap().abs() < 1e-12);
    assert!(v["local_super"]["a4"].as_f64().unwrap().abs() > 1e-3);
}

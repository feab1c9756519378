use std::path::Path;
use std::process::{Command, Output};

fn qlan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlan")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stderr)))
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn curve_default_grid() {
    let o = qlan(&["benchmark-curve"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("s,m0,R_star,brute_force_L1,abs_err"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 99);
    let r: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(r.windows(2).all(|w| w[1] < w[0]));
    let half = rows.iter().find(|r| r[0] == "0.5").unwrap();
    assert!((half[2].parse::<f64>().unwrap() - 7.0 / 18.0).abs() < 1e-15);
}

#[test]
fn curve_usage_and_domain_errors() {
    assert_eq!(qlan(&["benchmark-curve", "--s-grid", ""]).status.code(), Some(1));
    assert_eq!(qlan(&["benchmark-curve", "--s-grid", "0.1:0.5"]).status.code(), Some(1));
    let o = qlan(&["benchmark-curve", "--s-grid", "0.2,1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("s=1.5"));
    assert_eq!(qlan(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(qlan(&["--help"]).status.code(), Some(0));
}

#[test]
fn curve_range_grid_and_json() {
    let o = qlan(&["benchmark-curve", "--s-grid", "0.1:0.3:0.1", "--format", "json"]);
    let v = json(&o);
    let s: Vec<f64> = v.as_array().unwrap().iter().map(|r| r["s"].as_f64().unwrap()).collect();
    assert_eq!(s, vec![0.1, 0.2, 0.3]);
}

#[test]
fn order_audit_passes() {
    let o = qlan(&["stochastic-order-audit", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["passed"], true);
    assert_eq!(v["order_violations"].as_array().unwrap().len(), 0);
    assert_eq!(v["floor"].as_array().unwrap().len(), 9);
}

#[test]
fn tau_optimize_single_level() {
    let o = qlan(&["tau-optimize", "--s-grid", "0.5", "--tau-k", "1", "--seed", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)[0]["tau"], serde_json::json!([1.0]));
}

#[test]
fn stochastic_commands_need_a_seed() {
    for cmd in ["tau-optimize", "stochastic-order-audit", "protocol-risk", "lower-bound"] {
        assert_eq!(qlan(&[cmd]).status.code(), Some(1), "{cmd}");
    }
}

#[test]
fn blocks_two_qubits() {
    let v = json(&qlan(&["blocks-inspect", "--n-list", "2", "--r0", "0.5"]));
    assert_eq!(v["mu"], 0.75);
    let p: Vec<f64> = v["blocks"].as_array().unwrap().iter().map(|b| b["probability"].as_f64().unwrap()).collect();
    assert!((p[0] - 0.8125).abs() < 1e-15 && (p[1] - 0.1875).abs() < 1e-15);
    let one = json(&qlan(&["blocks-inspect", "--n-list", "1"]));
    assert_eq!(one["blocks"].as_array().unwrap().len(), 1);
    let eight = json(&qlan(&["blocks-inspect", "--n-list", "8", "--u", "0.3,-0.2,0.1"]));
    assert_eq!(eight["oracle_checked"], true);
    assert!(eight["oracle_max_deviation"].as_f64().unwrap() < 1e-12);
}

#[test]
fn lan_scan_smoke_and_flag() {
    let o = qlan(&["lan-converge", "--n-list", "16", "--grid-bins", "256"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(csv_rows(&stdout(&o)).len(), 1);
    assert!(o.stderr.is_empty());
    let far = qlan(&["lan-converge", "--n-list", "16", "--grid-bins", "256", "--u", "2,0,0"]);
    assert_eq!(far.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&far.stderr).contains("outside the local model"));
}

fn protocol_to(path: &Path, seed: &str) -> Output {
    qlan(&[
        "protocol-risk", "--n-list", "100", "--epsilon", "0.25", "--mc", "30", "--seed", seed, "--grid-bins", "512", "--out",
        path.to_str().unwrap(),
    ])
}

#[test]
fn protocol_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    assert_eq!(protocol_to(&a, "9").status.code(), Some(0));
    assert_eq!(protocol_to(&b, "9").status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = dir.path().join("c.json");
    assert_eq!(protocol_to(&c, "10").status.code(), Some(0));
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn protocol_single_sample() {
    let v = json(&qlan(&["protocol-risk", "--n-list", "100", "--epsilon", "0.25", "--mc", "1", "--seed", "0", "--grid-bins", "512"]));
    assert_eq!(v[0]["stderr"], 2.0);
    let r = v[0]["risk"].as_f64().unwrap();
    assert!((0.0..=2.0).contains(&r));
}

#[test]
fn protocol_budget_too_small_is_usage_error() {
    let o = qlan(&["protocol-risk", "--n-list", "40", "--epsilon", "0.25", "--seed", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"n_list": [100], "epsilon": 0.25, "mc": 30, "seed": 9, "grid_bins": 512, "format": "csv"}"#).unwrap();
    let o = qlan(&["protocol-risk", "--config", cfg.to_str().unwrap(), "--seed", "11"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows[0][9], "11");
    std::fs::write(&cfg, r#"{"seeds": 1}"#).unwrap();
    assert_eq!(qlan(&["protocol-risk", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn lower_bound_smoke() {
    let o = qlan(&["lower-bound", "--n-list", "32", "--mc", "4", "--seed", "1", "--grid-bins", "256"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v[0]["slack"].as_array().unwrap().len(), 3);
    assert_eq!(v[0]["bound_holds"], true);
}

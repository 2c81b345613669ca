use std::path::Path;
use std::process::{Command, Output};

fn storebid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_storebid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = storebid(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn errors_are_machine_readable() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("o");
    let out = storebid(&["evaluate", "--preset", "no-such", "--out", out_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "config");
    assert!(err["error"].as_str().unwrap().contains("no-such"));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"instance": {"preset": "desk"}, "unknown": 1}"#).unwrap();
    let out = storebid(&["solve", "--config", bad.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "config");
    assert!(!out_dir.join("manifest.json").exists());
}

#[test]
fn adp_policy_needs_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = storebid(&["evaluate", "--preset", "desk", "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("--table"));
}

#[test]
fn single_iteration_train_serializes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    ok(&["train", "--preset", "desk", "--iterations", "1", "--out", out.to_str().unwrap()]);
    assert!(out.join("table.sbvt").exists());
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "train");
    let listed: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(listed.contains(&"table.sbvt"));
    assert!(!listed.contains(&"manifest.json"));
    assert_eq!(json(&out.join("train.json"))["stats"]["iterations"], 1);
}

#[test]
fn idle_policy_earns_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["evaluate", "--preset", "desk", "--policy", "idle", "--out", tmp.path().to_str().unwrap()]);
    let report = json(&tmp.path().join("evaluation.json"));
    assert_eq!(report["mean_revenue"], 0.0);
    assert_eq!(report["revenue_quantiles"], serde_json::json!([0.0, 0.0, 0.0]));
}

#[test]
fn optimal_policy_on_deterministic_prices_earns_the_dp_value() {
    let tmp = tempfile::tempdir().unwrap();
    let solve = tmp.path().join("s");
    let eval = tmp.path().join("e");
    ok(&["solve", "--preset", "tiny", "--out", solve.to_str().unwrap()]);
    ok(&["evaluate", "--preset", "tiny", "--policy", "optimal", "--out", eval.to_str().unwrap()]);
    let v0 = json(&solve.join("solve.json"))["initial_value"].as_f64().unwrap();
    let mean = json(&eval.join("evaluation.json"))["mean_value"].as_f64().unwrap();
    assert!(v0 > 0.0);
    assert!((v0 - mean).abs() <= 1e-9 * v0.abs().max(1.0), "{v0} vs {mean}");
}

#[test]
fn benchmark_reports_every_run() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["benchmark", "--preset", "tiny", "--out", tmp.path().to_str().unwrap()]);
    let text = std::fs::read_to_string(tmp.path().join("benchmark.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "algorithm,N,seed,policy_value,pct_optimal");
    let rows: Vec<&str> = lines.collect();
    // the optimal row, then two algorithms at three budgets over five seeds
    assert_eq!(rows.len(), 1 + 2 * 3 * 5);
    assert!(rows.iter().any(|r| r.starts_with("m-adp,0,")));
    assert!(tmp.path().join("value_slice.csv").exists());
    assert!(tmp.path().join("timings.csv").exists());
}

#[test]
fn synthetic_file_round_trips_through_ingest() {
    let tmp = tempfile::tempdir().unwrap();
    let prices = tmp.path().join("p.csv");
    ok(&["generate-synthetic", "--weekdays", "30", "--out", prices.to_str().unwrap()]);
    let config = tmp.path().join("c.json");
    std::fs::write(
        &config,
        r#"{"instance": {
            "market": {"settlements_per_hour": 12, "horizon": 23, "r_max": 12, "l_max": 0,
                       "grid": {"linear": {"min": 0, "max": 150, "count": 4}}},
            "prices": {"kind": "historical", "files": ["p.csv"],
                       "dataset": {"mode": "prior-month", "target": "2012-02"}}}}"#,
    )
    .unwrap();
    let out = tmp.path().join("i");
    ok(&["ingest", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let ds = json(&out.join("dataset.json"));
    assert_eq!(ds["train_dates"].as_array().unwrap().len(), 17);
    assert_eq!(ds["test_dates"].as_array().unwrap().len(), 13);
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ratio_index::numeric::{parse_rational, rat};
use serde_json::Value;
use tempfile::TempDir;

const SPLIT: &str = r#"{ "root": "u", "nodes": [
  { "id": "u", "layer": 0, "zeta": "1/2", "edges": [ { "to": "v1", "p": "1/2" }, { "to": "v2", "p": "1/2" } ] },
  { "id": "v1", "layer": 1, "zeta": 1 },
  { "id": "v2", "layer": 1, "zeta": 0 } ] }"#;

const NOT_MARTINGALE: &str = r#"{ "root": "u", "nodes": [
  { "id": "u", "layer": 0, "zeta": "1/2", "edges": [ { "to": "v1", "p": "1/2" }, { "to": "v2", "p": "1/2" } ] },
  { "id": "v1", "layer": 1, "zeta": 1 },
  { "id": "v2", "layer": 1, "zeta": "1/2" } ] }"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ratio-index")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", stderr(o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn index_of_the_split_arm() {
    let dir = TempDir::new().unwrap();
    let arm = write(&dir, "split.json", SPLIT);
    let v = json(&run(&["index", s(&arm), "--h", "4", "--gittins"]));
    assert_eq!(v["ratio_index"], "2/3");
    let corners: Vec<(String, String)> = v["corners"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["cost"].as_str().unwrap().into(), c["profit"].as_str().unwrap().into()))
        .collect();
    assert_eq!(corners, [("3/4".into(), "1/2".into()), ("1".into(), "1/2".into())]);
    assert_eq!(v["policy"]["u"], "explore");
    assert_eq!(v["gittins"]["index"], "4/5");
}

#[test]
fn index_of_a_leaf() {
    let dir = TempDir::new().unwrap();
    let arm = write(&dir, "leaf.json", r#"{ "root": "c", "nodes": [ { "id": "c", "layer": 0, "zeta": "2/7" } ] }"#);
    let v = json(&run(&["index", s(&arm), "--h", "3"]));
    assert_eq!(v["ratio_index"], "2/7");
    assert_eq!(v["policy"], serde_json::json!({ "c": "exploit" }));
    let f = json(&run(&["index", s(&arm), "--h", "3", "--mode", "float"]));
    assert_eq!(f["ratio_index"], "2.8571428571428570e-1");
}

#[test]
fn malformed_input_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let arm = write(&dir, "broken.json", "{ \"root\": ");
    let o = run(&["index", s(&arm), "--h", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("parse error at line"), "{}", stderr(&o));
    let bad = write(&dir, "bad.json", NOT_MARTINGALE);
    let o = run(&["validate", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("martingale violation"));
    assert_eq!(run(&["certify", "--criteria", "13"]).status.code(), Some(2));
}

#[test]
fn gittins_float_and_exact_agree() {
    let dir = TempDir::new().unwrap();
    let arm = write(&dir, "split.json", SPLIT);
    let exact = json(&run(&["gittins", s(&arm), "--theta", "3/4", "--state", "u"]));
    let float = json(&run(&["gittins", s(&arm), "--theta", "0.75", "--state", "u", "--mode", "float"]));
    assert_eq!(exact["indices"][0]["index"], "4/5");
    let x: f64 = float["indices"][0]["index"].as_str().unwrap().parse().unwrap();
    assert!((x - 0.8).abs() < 1e-8);
    assert_eq!(run(&["gittins", s(&arm), "--h", "1"]).status.code(), Some(2));
}

#[test]
fn certify_counterexample_rows() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("rows.csv");
    let o = run(&["certify", "--criteria", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
    let rows = std::fs::read_to_string(out).unwrap();
    for decimal in ["0.5957", "0.5981", "0.6008"] {
        assert!(rows.contains(&format!(",{decimal},==,{decimal},true")), "{decimal} missing:\n{rows}");
    }
    assert!(rows.contains("explore(0),==,explore(0),true"), "{rows}");
    assert!(rows.contains("explore(1),==,explore(1),true"), "{rows}");
}

#[test]
fn certify_rejects_a_corrupted_instance_before_running() {
    let dir = TempDir::new().unwrap();
    write(&dir, "bad.json", NOT_MARTINGALE);
    let cfg = write(&dir, "cfg.json", r#"{ "arms": ["bad.json", { "beta_bernoulli": [1, 1], "depth": 2 }], "mode": "budgeted", "h": 2 }"#);
    let o = run(&["certify", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("martingale violation"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
}

#[test]
fn certify_a_config_instance() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "pair.json",
        r#"{ "arms": [{ "beta_bernoulli": [1, 1], "depth": 3 }, { "beta_bernoulli": [2, 3], "depth": 3 }], "mode": "budgeted", "h": 2 }"#,
    );
    let o = run(&["certify", s(&cfg), "--criteria", "4,5,8,9", "--trials", "200"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains(": PASS")).count(), 4);
}

#[test]
fn simulate_absorbing_arm_and_determinism() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "abs.json",
        r#"{ "arms": [{ "root": "c", "nodes": [ { "id": "c", "layer": 0, "zeta": "1/4" } ] }],
             "mode": "horizon", "h": [3, 8], "strategies": ["exploit_best"], "trials": 50, "seed": 1 }"#,
    );
    let o = run(&["simulate", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "strategy,mode,h,trials,seed,mean,stderr,seconds");
    assert_eq!(lines[1], "exploit_best,horizon,3,50,1,7.5000000000000000e-1,0.0000000000000000e0,0");
    assert_eq!(lines[2], "exploit_best,horizon,8,50,1,2.0000000000000000e0,0.0000000000000000e0,0");

    let mixed = write(
        &dir,
        "mixed.json",
        r#"{ "arms": [{ "beta_bernoulli": [1, 1], "depth": 3 }, { "beta_bernoulli": [3, 2], "depth": 3 }],
             "mode": "horizon", "h": [2, 5], "trials": 3000, "seed": 11 }"#,
    );
    let a = run(&["simulate", s(&mixed), "--workers", "1"]);
    let b = run(&["simulate", s(&mixed), "--workers", "8"]);
    let c = run(&["simulate", s(&mixed)]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    assert_eq!(stdout(&a).lines().count(), 1 + 8 * 2);
}

#[test]
fn ratio_scale_against_the_horizon_optimum() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "scale.json",
        r#"{ "arms": [{ "beta_bernoulli": [1, 1], "depth": 3 }, { "beta_bernoulli": [2, 5], "depth": 3 }, { "root": "c", "nodes": [ { "id": "c", "layer": 0, "zeta": "2/5" } ] }],
             "mode": "horizon", "h": [1, 2, 3, 4, 5, 6], "strategies": ["ratio_scale"], "trials": 500, "seed": 4,
             "oracle": true, "output": { "csv": "scale.csv" } }"#,
    );
    let o = run(&["simulate", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("scale.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "strategy,mode,h,trials,seed,mean,stderr,seconds,exact,optimum");
    let mut count = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let exact = parse_rational(f[8]).unwrap();
        let optimum = parse_rational(f[9]).unwrap();
        assert!(exact >= rat(187, 10_000) * &optimum, "{line}");
        assert!(exact <= optimum, "{line}");
        count += 1;
    }
    assert_eq!(count, 6);
}

#[test]
fn discounted_run_and_traces() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "disc.json",
        r#"{ "arms": [{ "beta_bernoulli": [1, 1], "depth": 2 }, { "beta_bernoulli": [1, 2], "depth": 2 }],
             "mode": "discounted", "h": 4, "discount": { "geometric": "1/2" }, "eval_horizon": 6,
             "strategies": ["ratio_scale"], "trials": 200, "oracle": true }"#,
    );
    let o = run(&["simulate", s(&cfg), "--mode", "float"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("ratio_scale,discounted,4,200,0,"));

    let traced = write(
        &dir,
        "traced.json",
        r#"{ "arms": [{ "beta_bernoulli": [1, 1], "depth": 2 }], "mode": "horizon", "h": 3,
             "strategies": ["greedy_ratio"], "trials": 2, "output": { "traces": "steps.jsonl" } }"#,
    );
    assert!(run(&["simulate", s(&traced)]).status.success());
    let steps = std::fs::read_to_string(dir.path().join("steps.jsonl")).unwrap();
    let records: Vec<Value> = steps.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 6);
    for key in ["t", "arm", "node_id", "next_node_id", "reward"] {
        assert!(records[0].get(key).is_some(), "{key}");
    }
}

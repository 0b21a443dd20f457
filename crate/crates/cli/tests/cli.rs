use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_counter-race"))
        .args(args)
        .env_remove("COUNTER_RACE_SEED")
        .output()
        .expect("binary runs")
}

fn records(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("JSON line"))
        .collect()
}

fn keys(v: &Value) -> Vec<&str> {
    v.as_object().unwrap().keys().map(String::as_str).collect()
}

#[test]
fn two_counters_always_move_together() {
    let out = run(&["simulate", "--n", "2", "--steps", "1e4"]);
    assert!(out.status.success());
    let r = records(&out);
    assert_eq!(r[0]["mean"], 2.0);
    assert_eq!(keys(&r[0]), ["record", "mean", "stderr", "steps", "burn_in", "seed", "N", "replica"]);
}

#[test]
fn simulation_is_deterministic_and_seed_env_is_honoured() {
    let a = run(&["simulate", "--n", "5", "--steps", "20000", "--replicas", "2"]);
    let b = run(&["simulate", "--n", "5", "--steps", "20000", "--replicas", "2"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(records(&a).len(), 3);
    let c = Command::new(env!("CARGO_BIN_EXE_counter-race"))
        .args(["simulate", "--n", "5", "--steps", "20000"])
        .env("COUNTER_RACE_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(records(&c)[0]["seed"], 99);
}

#[test]
fn bounds_records() {
    let out = run(&["bounds", "--asymptotic", "--grid", "2000"]);
    assert!(out.status.success());
    let r = records(&out);
    assert_eq!(r[0]["exact"], "34/27");
    assert_eq!(r[0]["witness"]["levels"], 3);
    assert!((r[1]["value"].as_f64().unwrap() - (1.0 + 3f64.sqrt() / 27.0)).abs() < 1e-9);
    assert_eq!(keys(&r[0]), ["record", "N", "direction", "value", "exact", "witness", "method"]);

    let r = records(&run(&["bounds", "--n", "7"]));
    assert_eq!(r[0]["exact"], "47/35");

    let r = records(&run(&["bounds", "--n", "4"]));
    assert_eq!((r[0]["exact"].as_str(), r[1]["exact"].as_str()), (Some("26/19"), Some("10/7")));

    let out = run(&["bounds", "--n", "9", "--closed-forms"]);
    assert_eq!(records(&out).len(), 10);
}

#[test]
fn parameter_errors_exit_with_two() {
    assert_eq!(run(&["bounds", "--n", "3"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--n", "1"]).status.code(), Some(2));
    assert_eq!(run(&["lp", "--n", "25"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--n", "5", "--steps", "1.5"]).status.code(), Some(2));
}

#[test]
fn short_horizon_exits_with_three() {
    let out = run(&["meanfield", "--k", "40", "--t", "5"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("increase T"));
}

#[test]
fn exact_small_sizes() {
    let r = records(&run(&["exact", "--n", "3"]));
    assert_eq!((r[0]["pi0"].as_str(), r[0]["speed"].as_str()), (Some("1/4"), Some("3/2")));
    let r = records(&run(&["exact", "--n", "4", "--l", "60", "--tol", "1e-10"]));
    let v = r[0]["speed"].as_f64().unwrap();
    assert!((1.3938..=1.3978).contains(&v));
    assert_eq!(run(&["exact", "--n", "5"]).status.code(), Some(2));
}

#[test]
fn lp_csv() {
    let out = run(&["lp", "--from", "4", "--to", "6", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "record,N,bound,exact,quadratic_f_bound,h,active,method");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("lp,4,1.428571"));
}

#[test]
fn drift_exit_codes() {
    let out = run(&["drift", "--n", "6", "--samples", "200", "--lyapunov", "quadratic"]);
    assert!(out.status.success());
    assert_eq!(records(&out)[0]["failures"], 0);
    // the exponential function at r = 1/2 has positive drift for N >= 4
    let out = run(&["drift", "--n", "6", "--samples", "200"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(records(&out).len(), 2);
}

#[test]
fn increments_and_curves() {
    let out = run(&["increments", "--n", "4", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("increments,2-2,4/3,-2/3,2/3"));
    assert!(text.contains("increments,4,2,1,0"));

    let out = run(&["meanfield", "--k", "5", "--t", "2", "--dt", "0.01", "--curves", "1", "--format", "tsv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("record\tk\tx\ty"));
    assert_eq!(lines.next(), Some("curve\t1\t0.0\t0.0"));
}

#[test]
fn out_flag_writes_a_file() {
    let path = std::env::temp_dir().join(format!("counter-race-{}.jsonl", std::process::id()));
    let out = run(&["exact", "--n", "3", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).ok();
    assert!(text.contains("\"speed\":\"3/2\""));
}

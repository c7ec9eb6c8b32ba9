use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const EX3: &str = "5 5\n11001\n01010\n01101\n10011\n00111\n";

fn idg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idg")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn params_reference_cell() {
    let v = json(&idg(&["params", "--n", "1024", "--r", "1", "--d", "1", "--i-max", "1", "--delta", "1"]));
    assert!((v["p1"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-15);
    assert!((v["tau"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(v["t1"], 1299);
    assert_eq!(v["t2"], 84);
    assert_eq!(v["t_na"], 1685);
    assert_eq!(v["adaptive_total_tests"], 1383);
}

#[test]
fn decode_example3() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("ex3.mat");
    fs::write(&m, EX3).unwrap();
    let v =
        json(&idg(&["decode", "--matrix", path(&m), "--outcomes", "01110", "--threshold", "0.5", "--expected-d", "2"]));
    let expected: Value =
        serde_json::from_str(r#"{"defectives":[1,3],"inhibitors":[0,2],"edges":[[0,1],[2,3]],"failure":null}"#)
            .unwrap();
    assert_eq!(v, expected);
}

#[test]
fn bounds_counting_example() {
    let v = json(&idg(&["bounds", "--n", "10", "--r", "1", "--d", "2", "--model", "nsi"]));
    assert_eq!(v["counting_lb"], 11);
    let table = idg(&["bounds", "--n", "10", "--r", "1", "--d", "2", "--table"]);
    assert!(table.status.success());
    assert!(String::from_utf8(table.stdout).unwrap().contains("counting lower bound"));
}

#[test]
fn generate_outcome_and_oracle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    let m = dir.path().join("m.mat");
    let y = dir.path().join("y.txt");
    let gen_graph = ["gen-graph", "--n", "6", "--r", "1", "--d", "1", "--seed", "4", "--out", path(&g)];
    assert!(idg(&gen_graph).status.success());
    let first = fs::read(&g).unwrap();
    assert!(idg(&gen_graph).status.success());
    assert_eq!(fs::read(&g).unwrap(), first);

    let gen_matrix = ["gen-matrix", "--tests", "8", "--n", "6", "--p", "0.3", "--seed", "2", "--out", path(&m)];
    assert!(idg(&gen_matrix).status.success());
    assert!(idg(&["outcome", "--graph", path(&g), "--matrix", path(&m), "--out", path(&y)]).status.success());
    assert_eq!(fs::read_to_string(&y).unwrap().trim().len(), 8);

    let set = json(&idg(&[
        "oracle",
        "consistent",
        "--matrix",
        path(&m),
        "--outcomes-file",
        path(&y),
        "--r",
        "1",
        "--d",
        "1",
    ]));
    let truth: Value = serde_json::from_slice(&first).unwrap();
    assert!(set["candidates"].as_array().unwrap().contains(&truth));

    let err = json(&idg(&["oracle", "error-prob", "--graph", path(&g), "--t", "12"]));
    let p = err["error_probability"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(err["spec"]["tests"], 12);
}

#[test]
fn stats_single_edge() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    fs::write(&g, r#"{"n":3,"inhibitors":[0],"defectives":[1],"edges":[[0,1]]}"#).unwrap();
    let v = json(&idg(&["stats", "--graph", path(&g), "--p", "0.5", "--item", "2", "--kind", "q2-exact"]));
    assert_eq!(v["value"], 0.25);
    assert_eq!(v["kind"], "q2_exact");
}

#[test]
fn adaptive_decode_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("ex3.mat");
    let m2 = dir.path().join("s2.mat");
    fs::write(&m, EX3).unwrap();
    // remaining items after declaring {1, 3} are [0, 2, 4]
    fs::write(&m2, "3 3\n100\n010\n001\n").unwrap();
    let v = json(&idg(&[
        "decode",
        "--matrix",
        path(&m),
        "--outcomes",
        "01110",
        "--threshold",
        "0.5",
        "--expected-d",
        "2",
        "--design",
        "adaptive",
        "--stage2-matrix",
        path(&m2),
        "--stage2-outcomes",
        "011,101",
    ]));
    assert_eq!(v["edges"], serde_json::json!([[0, 1], [2, 3]]));
    assert_eq!(v["failure"], Value::Null);
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--n", "60", "--r", "1", "--d", "1", "--trials", "5", "--seed", "3"];
    let a = idg(&args);
    let b = idg(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["reports"].as_array().unwrap().len(), 5);
    assert_eq!(v["summary"]["trials"], 5);
}

#[test]
fn sweep_csv_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"n":[50],"r":[0,1],"d":[1,2],"models":[{"model":"nsi"},{"model":"wsi","i_max":1}],
            "designs":["adaptive","nonadaptive"],"trials":6,"master_seed":5}"#,
    )
    .unwrap();
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_idg"))
            .args(["sweep", "--config", path(&cfg)])
            .env("IDG_THREADS", threads)
            .output()
            .unwrap()
    };
    let one = run("1");
    let many = run("16");
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(one.stdout, many.stdout);
    let csv = String::from_utf8(one.stdout).unwrap();
    assert!(csv.starts_with("n,r,d,model,i_max,delta,design,trials,successes,rate,mean_tests,"));
    // r = 0 rows under wsi are skipped with a note, the rest ran
    assert_eq!(csv.lines().count(), 1 + 16);
    assert!(csv.lines().any(|l| l.contains("skipped")));
}

#[test]
fn errors_and_exit_codes() {
    let out = idg(&["params", "--n", "3", "--r", "2", "--d", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "input");

    let out = idg(&["params", "--n", "10", "--r", "3", "--d", "1", "--i-max", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "infeasible");

    assert_eq!(idg(&["gen-matrix", "--tests", "3", "--n", "4", "--p", "0.5"]).status.code(), Some(2));
    assert_eq!(idg(&["params", "--n", "10"]).status.code(), Some(2));
    assert_eq!(idg(&["decode", "--matrix", "x", "--expected-d", "1", "--threshold", "0.5"]).status.code(), Some(2));

    let out = idg(&["outcome", "--graph", "/nonexistent.json", "--matrix", "/nonexistent.mat"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_documents_formats() {
    for cmd in ["decode", "gen-matrix", "outcome", "stats"] {
        let out = idg(&[cmd, "--help"]);
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("File formats"), "{cmd}");
    }
}

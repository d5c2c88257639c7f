use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SUBCOMMANDS: [&str; 8] = ["space", "graph", "oracle", "dbgen", "train", "predict", "dse", "report"];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pragma-dse"));
    c.env_remove("PRAGMA_DSE_HOME");
    c
}

fn run(home: Option<&Path>, args: &[&str]) -> Output {
    let mut c = bin();
    if let Some(h) = home {
        c.env("PRAGMA_DSE_HOME", h);
    }
    c.args(args).output().expect("binary runs")
}

fn ok(home: Option<&Path>, args: &[&str]) -> String {
    let out = run(home, args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).expect("valid JSON")
}

fn corpus_kernel(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../kernels").join(format!("{name}.mlk"))
}

#[test]
fn every_subcommand_has_help() {
    let top = ok(None, &["--help"]);
    for s in SUBCOMMANDS {
        assert!(top.contains(s), "{s} missing from top-level help");
        let h = ok(None, &[s, "--help"]);
        assert!(h.contains("--seed") && h.contains("--jobs"), "{s}");
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(None, &[]).status.code(), Some(1));
    assert_eq!(run(None, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(None, &["space"]).status.code(), Some(1));
    assert_eq!(run(None, &["oracle", "toy", "--factor-cap", "lots"]).status.code(), Some(1));
    assert_eq!(run(None, &["train", "--task", "sideways", "-o", "m.json"]).status.code(), Some(1));
}

#[test]
fn data_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(None, &["space", "no_such_kernel"]).status.code(), Some(2));
    let bad = tmp.path().join("bad.mlk");
    fs::write(&bad, "void f( {\n").unwrap();
    let out = run(None, &["space", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"_PARA_L1": 3}"#).unwrap();
    assert_eq!(run(None, &["oracle", "toy", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(Some(tmp.path()), &["report"]).status.code(), Some(2));
}

#[test]
fn space_reports_sizes_and_enumerates() {
    let v = json(&ok(None, &["space", "toy"]));
    assert_eq!(v["kernel"], "toy");
    assert_eq!(v["size_pruned"], "18");
    assert_eq!(v["search_order"], serde_json::json!(["_PARA_L1", "_PIPE_L1"]));
    let lines = ok(None, &["space", "toy", "--enumerate"]);
    assert_eq!(lines.lines().count(), 18);
    for l in lines.lines() {
        json(l);
    }
    assert_eq!(ok(None, &["space", "toy", "--enumerate", "--limit", "5"]).lines().count(), 5);
}

#[test]
fn oracle_and_graph_json() {
    let tmp = tempfile::tempdir().unwrap();
    let d = json(&ok(None, &["oracle", "toy"]));
    assert_eq!(d["valid"], true);
    assert_eq!(d["reason"], "ok");
    assert!(d["objectives"]["latency"].as_u64().unwrap() > 0);
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"_PARA_L1": 4, "_PIPE_L1": "off"}"#).unwrap();
    let p = json(&ok(None, &["oracle", "toy", "--config", cfg.to_str().unwrap()]));
    assert!(p["objectives"]["latency"].as_u64() < d["objectives"]["latency"].as_u64());
    let from_file = json(&ok(None, &["oracle", corpus_kernel("atax").to_str().unwrap()]));
    assert_eq!(from_file, json(&ok(None, &["oracle", "atax"])));

    let g = json(&ok(None, &["graph", "toy"]));
    assert!(!g["nodes"].as_array().unwrap().is_empty());
    let gi = json(&ok(None, &["graph", "toy", "--config", cfg.to_str().unwrap()]));
    assert_eq!(g["nodes"].as_array().unwrap().len(), gi["nodes"].as_array().unwrap().len());
    assert_ne!(g, gi);
}

fn home_with_kernels(names: &[&str]) -> tempfile::TempDir {
    let home = tempfile::tempdir().unwrap();
    fs::create_dir(home.path().join("kernels")).unwrap();
    for n in names {
        fs::copy(corpus_kernel(n), home.path().join("kernels").join(format!("{n}.mlk"))).unwrap();
    }
    home
}

const SMALL_MODEL: [&str; 8] = ["--epochs", "3", "--hidden-dim", "8", "--layers", "2", "--batch-size", "16"];

fn dbgen(home: &Path, jobs: &str) -> String {
    ok(
        Some(home),
        &["dbgen", "--budget", "12", "--hybrid-budget", "12", "--random-budget", "12", "--seed", "5", "--jobs", jobs],
    )
}

#[test]
fn pipeline_under_home() {
    let home = home_with_kernels(&["scale_rows", "bicg"]);
    let h = Some(home.path());
    let table = dbgen(home.path(), "1");
    assert!(table.contains("scale_rows") && table.contains("bicg"));
    assert!(home.path().join("db/meta.json").exists());

    let report = json(&ok(h, &["report"]));
    let records = report["records"].as_u64().unwrap();
    assert!(records > 0);
    assert!(report["pareto"]["bicg"].is_array());

    // a second dbgen with the same settings only appends
    dbgen(home.path(), "1");
    assert_eq!(json(&ok(h, &["report"]))["records"].as_u64().unwrap(), records);

    let models = home.path().join("models");
    for task in ["main", "bram", "classify"] {
        let out = models.join(format!("{task}.json"));
        let mut args = vec!["train", "--task", task, "-o", out.to_str().unwrap()];
        args.extend(SMALL_MODEL);
        let v = json(&ok(h, &args));
        assert_eq!(v["task"], task);
        assert!(out.exists());
    }

    let p = json(&ok(h, &["predict", "--kernel", "bicg"]));
    let preds = p["predictions"].as_array().unwrap();
    assert_eq!(preds.len(), 1);
    assert!(preds[0]["latency"].as_u64().unwrap() >= 1);

    let dse_report = home.path().join("dse.json");
    let csv = home.path().join("dse.csv");
    let mut args = vec![
        "dse", "--rounds", "1", "--top-m", "3", "--max-evals", "300", "-o", dse_report.to_str().unwrap(),
        "--csv", csv.to_str().unwrap(),
    ];
    args.extend(SMALL_MODEL);
    ok(h, &args);
    let r = json(&fs::read_to_string(&dse_report).unwrap());
    assert_eq!(r["rounds"].as_array().unwrap().len(), 1);
    assert!(fs::read_to_string(&csv).unwrap().starts_with("round,kernel,best_latency,speedup\n"));
    let after = json(&ok(h, &["report"]))["records"].as_u64().unwrap();
    assert!(after >= records);

    // zero rounds searches with the models written by the last run
    let single = home.path().join("single.json");
    ok(h, &["dse", "--rounds", "0", "--kernel", "bicg", "--max-evals", "300", "-o", single.to_str().unwrap()]);
    let s = json(&fs::read_to_string(&single).unwrap());
    assert!(s["search"]["bicg"]["top"].is_array());

    let m = home.path().join("m.json");
    assert_eq!(run(h, &["train", "--task", "main", "-o", m.to_str().unwrap(), "--split", "1.5"]).status.code(), Some(1));
    assert_eq!(run(h, &["dse", "--top-m", "0", "-o", single.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(run(h, &["dse", "--kernel", "gemm", "-o", single.to_str().unwrap()]).status.code(), Some(2));
}

/// Every file under `dir`, relative path and bytes, in sorted order.
fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn results_do_not_depend_on_jobs() {
    let a = home_with_kernels(&["scale_rows", "atax"]);
    let b = home_with_kernels(&["scale_rows", "atax"]);
    dbgen(a.path(), "1");
    dbgen(b.path(), "2");
    let (da, db) = (files(&a.path().join("db")), files(&b.path().join("db")));
    assert!(da.len() > 3);
    assert_eq!(da, db);
    let train = |home: &Path, jobs: &str| {
        let out = home.join("m.json");
        let mut args = vec!["train", "--task", "main", "-o", out.to_str().unwrap(), "--jobs", jobs];
        args.extend(SMALL_MODEL);
        ok(Some(home), &args);
        fs::read(out).unwrap()
    };
    assert_eq!(train(a.path(), "1"), train(b.path(), "2"));
}

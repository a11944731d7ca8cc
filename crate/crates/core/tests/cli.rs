use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn gmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmf")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn sweep(out: &Path) -> Value {
    json!({
        "experiment": "lln_n_sweep",
        "model": {"name": "ou_driven", "params": {"sigma": 0.3}},
        "graphon": {"name": "min"},
        "N": [4, 8], "k": [16], "T": 0.5, "replications": 2, "seed": 99,
        "meanfield": {"P": 4, "M": 8, "max_iters": 3, "tol": null},
        "out_dir": out
    })
}

fn without_wall_time(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            let mut cols: Vec<&str> = l.split(',').collect();
            cols.remove(7);
            cols.join(",")
        })
        .collect()
}

#[test]
fn run_writes_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for tag in ["a", "b"] {
        let out = dir.path().join(tag);
        let cfg = write_config(dir.path(), &format!("{tag}.json"), &sweep(&out));
        let res = gmf(&["run", &cfg]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        for file in ["result.csv", "manifest.txt", "meanfield_summary.csv", "meanfield_marginals.csv", "graphon_N4.csv"] {
            assert!(out.join(file).exists(), "{file}");
        }
        csvs.push(std::fs::read_to_string(out.join("result.csv")).unwrap());
    }
    assert_eq!(without_wall_time(&csvs[0]), without_wall_time(&csvs[1]));
    assert!(csvs[0].starts_with("experiment,N,k,replication,metric,value,std_error,wall_time_ms,seed_lineage\n"));
    let summary = std::fs::read_to_string(dir.path().join("a/meanfield_summary.csv")).unwrap();
    assert!(summary.starts_with("node,iterations,residual\n"));
    let graphon = std::fs::read_to_string(dir.path().join("a/graphon_N4.csv")).unwrap();
    assert!(graphon.starts_with("i,j,weight\n"));
    let manifest = std::fs::read_to_string(dir.path().join("a/manifest.txt")).unwrap();
    assert!(manifest.contains("\"experiment\": \"lln_n_sweep\""));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut extra = sweep(&out);
    extra["colour"] = json!("blue");
    let mut empty = sweep(&out);
    empty["N"] = json!([]);
    let mut model = sweep(&out);
    model["model"]["params"] = json!({"sigma": 0.3, "bogus": 1});
    let mut missing = sweep(&out);
    missing.as_object_mut().unwrap().remove("seed");
    for (name, cfg) in [("extra", extra), ("empty", empty), ("model", model), ("missing", missing)] {
        let path = write_config(dir.path(), &format!("{name}.json"), &cfg);
        assert_eq!(gmf(&["run", &path]).status.code(), Some(2), "{name}");
    }
    std::fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    assert_eq!(gmf(&["run", dir.path().join("broken.json").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(gmf(&["run", dir.path().join("absent.json").to_str().unwrap()]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn all_cells_diverging_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = json!({
        "experiment": "sgd_demo",
        "model": {"name": "sgd_quadratic", "params": {
            "alpha1": 0.0, "alpha2": 1e10, "target": 0.0, "init": {"kind": "point", "value": 1e300}
        }},
        "graphon": {"name": "product"},
        "N": [2, 3], "k": [4], "T": 1.0, "replications": 2, "seed": 1,
        "meanfield": {"P": 2, "M": 2, "max_iters": 1},
        "out_dir": out
    });
    let path = write_config(dir.path(), "div.json", &cfg);
    assert_eq!(gmf(&["run", &path]).status.code(), Some(3));
    let csv = std::fs::read_to_string(out.join("result.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.contains(",diverged,")).count(), 4);
}

#[test]
fn selftest_passes() {
    let res = gmf(&["selftest"]);
    assert_eq!(res.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&res.stdout).contains("selftest passed"));
}

#[test]
fn info_describes_presets() {
    let res = gmf(&["info", "sgd_quadratic"]);
    assert_eq!(res.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&res.stdout).contains("alpha1"));
    assert_eq!(gmf(&["info", "nothing"]).status.code(), Some(2));
}

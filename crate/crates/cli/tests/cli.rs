use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_oaccomp"));
    c.env_remove("OACCOMP_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, name: &str, body: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(body).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn small_sum() -> Value {
    json!({
        "version": 1,
        "function": "sum",
        "k": 2,
        "q": 4,
        "metric": {"kind": "euclidean"},
        "noise": {"kind": "complex_gaussian", "params": {"variance": 0.04}},
        "solver": {"restarts": 4},
        "simulation": {"trials": 2000},
        "seed": 3
    })
}

fn files_of(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["design", "--help"])), 0);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["design"])), 1);
    assert_eq!(code(&run(&["nonsense"])), 1);
}

#[test]
fn config_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_sum();
    cfg["colour"] = json!("blue");
    let path = write_config(tmp.path(), "unknown.json", &cfg);
    let out = run(&["design", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{ \"function\": ").unwrap();
    assert_eq!(
        code(&run(&["design", "--config", bad.to_str().unwrap()])),
        1
    );

    let missing = tmp.path().join("absent.json");
    assert_eq!(
        code(&run(&["design", "--config", missing.to_str().unwrap()])),
        1
    );

    let mut big = small_sum();
    big["k"] = json!(7);
    let path = write_config(tmp.path(), "big.json", &big);
    let out = run(&["design", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);

    let path = write_config(tmp.path(), "ok.json", &small_sum());
    let out = bin()
        .env("OACCOMP_THREADS", "zero")
        .args(["design", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("OACCOMP_THREADS"));
}

#[test]
fn design_writes_a_verifiable_constellation() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &small_sum());
    let dir = tmp.path().join("d");
    let out = run(&[
        "design",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let result = read_json(&dir.join("result.json"));
    let margin = result["margin"].as_f64().unwrap();
    assert!(margin >= 1.0 / 14.0 - 1e-6, "{margin}");
    assert_eq!(result["feasible"], json!(true));

    let csv = dir.join("constellation.csv");
    let check = tmp.path().join("v");
    let out = run(&[
        "verify",
        csv.to_str().unwrap(),
        "--config",
        path.to_str().unwrap(),
        "--out",
        check.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let verified = read_json(&check.join("verify.json"));
    assert_eq!(verified["feasible"], json!(true));
    let again = verified["result"]["margin"].as_f64().unwrap();
    assert!((again - margin).abs() < 1e-9, "{again} vs {margin}");

    // the result file itself is accepted as a constellation
    let out = run(&[
        "verify",
        dir.join("result.json").to_str().unwrap(),
        "--function",
        "sum",
        "--k",
        "2",
        "--q",
        "4",
    ]);
    assert_eq!(code(&out), 0);
}

#[test]
fn frozen_qpsk_is_infeasible_for_max() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "version": 1,
        "function": "max",
        "k": 2,
        "q": 4,
        "metric": {"kind": "euclidean"},
        "constellation": [[0.5, 0.0], [0.0, 0.5], [-0.5, 0.0], [0.0, -0.5]]
    });
    let path = write_config(tmp.path(), "qpsk.json", &cfg);
    let dir = tmp.path().join("d");
    let out = run(&[
        "design",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    let result = read_json(&dir.join("result.json"));
    assert_eq!(result["feasible"], json!(false));
}

#[test]
fn verify_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let write = |name: &str, rows: &str| {
        let p = tmp.path().join(name);
        std::fs::write(&p, rows).unwrap();
        p
    };
    let bpsk = write("bpsk.csv", "-1,0\n1,0\n");
    let qpsk = write("qpsk.csv", "1,0\n0,1\n-1,0\n0,-1\n");
    let zero = write("zero.csv", "0,0\n0,0\n");
    let inline = |p: &Path, q: &str| {
        run(&[
            "verify",
            p.to_str().unwrap(),
            "--function",
            "max",
            "--k",
            "2",
            "--q",
            q,
        ])
    };
    assert_eq!(code(&inline(&bpsk, "2")), 0);
    assert_eq!(code(&inline(&qpsk, "4")), 2);
    assert_eq!(code(&inline(&zero, "2")), 2);
    // wrong number of rows for q
    assert_eq!(code(&inline(&bpsk, "4")), 1);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &small_sum());
    let mut runs = Vec::new();
    for attempt in 0..2 {
        let dir = tmp.path().join(format!("s{attempt}"));
        let out = run(&[
            "simulate",
            "--config",
            path.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        runs.push((files_of(&dir), out.stdout));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &small_sum());
    let mut runs = Vec::new();
    for threads in ["1", "3"] {
        let dir = tmp.path().join(format!("t{threads}"));
        let out = bin()
            .env("OACCOMP_THREADS", threads)
            .args([
                "simulate",
                "--config",
                path.to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        runs.push(files_of(&dir));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn one_point_sweep_matches_simulate() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_sum();
    cfg["sweep"] = json!({"grid": [0.2]});
    let path = write_config(tmp.path(), "c.json", &cfg);
    let sim = tmp.path().join("sim");
    let swp = tmp.path().join("swp");
    for (cmd, dir) in [("simulate", &sim), ("sweep", &swp)] {
        let out = run(&[
            cmd,
            "--config",
            path.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let sim = read_json(&sim.join("simulate.json"));
    let swp = read_json(&swp.join("sweep.json"));
    let point = &swp["designs"][0]["sweep"]["points"][0];
    assert_eq!(point["mse"], sim["mse"]);
    assert_eq!(point["mae"], sim["mae"]);
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &small_sum());
    let mut seeds = Vec::new();
    for seed in ["3", "4"] {
        let dir = tmp.path().join(format!("s{seed}"));
        let out = run(&[
            "simulate",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        let sim = read_json(&dir.join("simulate.json"));
        seeds.push(sim["metadata"]["seed"].clone());
    }
    assert_eq!(seeds, vec![json!(3), json!(4)]);
}

//! End-to-end tests of the `curvedetect` binary: the simulate -> sweep
//! pipeline, exit codes, metadata sidecars, and offline isolation.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_curvedetect"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_then_sweep_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    let data_s = data.to_str().unwrap();

    let sim = run(&[
        "simulate",
        "--offline",
        "--seed",
        "7",
        "--n-machine",
        "12",
        "--n-human",
        "12",
        "--out",
        data_s,
    ]);
    assert!(sim.status.success(), "simulate failed: {}", stderr_of(&sim));

    let body = std::fs::read_to_string(&data).unwrap();
    assert_eq!(body.lines().count(), 24);
    let first: serde_json::Value = serde_json::from_str(body.lines().next().unwrap()).unwrap();
    assert!(first["id"].is_string());
    assert!(first["latent"].is_array());
    assert!(first["label"].is_string());

    let world = dir.path().join("data.jsonl.world.json");
    assert!(world.exists(), "world spec sidecar missing");
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("data.jsonl.meta.json")).unwrap())
            .unwrap();
    assert!(meta["config"].is_object());
    assert!(meta["seeds"].is_array());

    let csv_path = dir.path().join("sweep.csv");
    let sweep = run(&[
        "sweep",
        "--offline",
        "--simulate-world",
        world.to_str().unwrap(),
        "--input",
        data_s,
        "--budgets",
        "3,4",
        "--methods",
        "surrogate",
        "--seeds",
        "1",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(sweep.status.success(), "sweep failed: {}", stderr_of(&sweep));

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("dataset,method,budget,seed,auroc"));
    let rows: Vec<&str> = lines.collect();
    // 2 budgets x 1 method x 1 seed, plus per-(method,budget) aggregate rows
    assert!(rows.len() >= 2, "csv too short:\n{csv}");
    for row in &rows {
        let auroc: f64 = row.split(',').last().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&auroc), "bad auroc row: {row}");
    }
    assert!(dir.path().join("sweep.csv.meta.json").exists());
}

#[test]
fn detect_candidate_drawn_from_world() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let sim = run(&[
        "simulate",
        "--offline",
        "--seed",
        "11",
        "--n-machine",
        "2",
        "--n-human",
        "2",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(sim.status.success());
    let world = dir.path().join("d.jsonl.world.json");

    let out_path = dir.path().join("det.json");
    let det = run(&[
        "detect",
        "--offline",
        "--simulate-world",
        world.to_str().unwrap(),
        "--budget",
        "4",
        "--seed",
        "5",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(det.status.success(), "detect failed: {}", stderr_of(&det));

    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(result["measure"].as_f64().unwrap().is_finite());
    assert_eq!(result["queries_used"].as_u64(), Some(4));
    assert_eq!(result["method"], "surrogate");
    assert!(dir.path().join("det.json.meta.json").exists());
}

#[test]
fn detect_with_threshold_emits_decision() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    assert!(run(&[
        "simulate",
        "--offline",
        "--seed",
        "3",
        "--n-machine",
        "2",
        "--n-human",
        "2",
        "--out",
        data.to_str().unwrap(),
    ])
    .status
    .success());
    let world = dir.path().join("d.jsonl.world.json");

    let det = run(&[
        "detect",
        "--offline",
        "--simulate-world",
        world.to_str().unwrap(),
        "--budget",
        "3",
        "--threshold=-1000000",
    ]);
    assert!(det.status.success(), "{}", stderr_of(&det));
    let result: serde_json::Value =
        serde_json::from_slice(&det.stdout).expect("stdout is the result JSON");
    // any finite measure clears a threshold of -1e6
    assert_eq!(result["decision"], true);
}

#[test]
fn detect_without_candidate_is_config_error() {
    let out = run(&["detect", "--offline"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("candidate"), "{}", stderr_of(&out));
}

#[test]
fn malformed_config_file_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let out = run(&[
        "detect",
        "--config",
        cfg.to_str().unwrap(),
        "--text",
        "hello",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_rejects_budget_below_two() {
    let out = run(&["sweep", "--offline", "--budgets", "1,3", "--seeds", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains(">= 2"));
}

#[test]
fn unreachable_provider_is_provider_error() {
    // a loopback port with nothing listening
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let url = format!("http://127.0.0.1:{port}");
    let out = run(&[
        "detect",
        "--text",
        "some candidate passage of reasonable length",
        "--scorer-url",
        &url,
        "--perturber-url",
        &url,
        "--sim-url",
        &url,
        "--budget",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
}

#[test]
fn offline_flag_ignores_remote_env_urls() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    assert!(run(&[
        "simulate",
        "--offline",
        "--seed",
        "9",
        "--n-machine",
        "2",
        "--n-human",
        "2",
        "--out",
        data.to_str().unwrap(),
    ])
    .status
    .success());
    let world = dir.path().join("d.jsonl.world.json");

    // unroutable endpoints in the environment must be ignored under --offline
    let out = bin()
        .args([
            "detect",
            "--offline",
            "--simulate-world",
            world.to_str().unwrap(),
            "--budget",
            "3",
        ])
        .env("CD_SCORER_URL", "http://127.0.0.1:9")
        .env("CD_PERTURBER_URL", "http://127.0.0.1:9")
        .env("CD_SIM_URL", "http://127.0.0.1:9")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
}

#[test]
fn no_out_flag_writes_no_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    assert!(run(&[
        "simulate",
        "--offline",
        "--seed",
        "13",
        "--n-machine",
        "2",
        "--n-human",
        "2",
        "--out",
        data.to_str().unwrap(),
    ])
    .status
    .success());
    let world = dir.path().join("d.jsonl.world.json");

    let cwd_before: Vec<_> = list_dir(dir.path());
    let det = bin()
        .args([
            "detect",
            "--offline",
            "--simulate-world",
            world.to_str().unwrap(),
            "--budget",
            "3",
        ])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(det.status.success());
    assert_eq!(list_dir(dir.path()), cwd_before, "detect without --out created files");
}

fn list_dir(p: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(p)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

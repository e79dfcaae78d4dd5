use std::fs;
use std::path::Path;

use screened_anderson::cli::{default_msa, run, RunConfig};
use screened_anderson::experiments::MsaConfig;
use serde_json::Value;

fn args(list: &[&str]) -> Vec<String> {
    std::iter::once("screened-anderson").chain(list.iter().copied()).map(String::from).collect()
}

fn small_msa(dir: &Path) -> std::path::PathBuf {
    let mut cfg = default_msa();
    cfg.trials = 60;
    let path = dir.join("msa.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn msa_runs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_msa(dir.path());
    let mut outputs = Vec::new();
    for threads in ["1", "4", "4"] {
        let out = dir.path().join(format!("out{}", outputs.len()));
        fs::create_dir(&out).unwrap();
        let code = run(args(&[
            "msa",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "7",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        let csv = fs::read_to_string(out.join("msa.csv")).unwrap();
        let json = fs::read_to_string(out.join("msa.json")).unwrap();
        // the output path is part of the embedded config; strip it before comparing
        let strip = |s: &str| s.replace(out.to_str().unwrap(), "OUT");
        outputs.push((strip(&csv), strip(&json)));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
}

#[test]
fn outputs_embed_config_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_msa(dir.path());
    let code = run(args(&[
        "msa",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.path().join("msa.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# screened-anderson "));
    let header = lines.next().unwrap().strip_prefix("# config: ").unwrap();
    let run_cfg: RunConfig = serde_json::from_str(header).unwrap();
    assert_eq!(run_cfg.master_seed, 3);
    assert_eq!(run_cfg.subcommand, "msa");
    let params: MsaConfig = serde_json::from_value(run_cfg.params.clone()).unwrap();
    assert_eq!(params.trials, 60);
    assert_eq!(
        lines.next().unwrap(),
        "k,l_k,failures,trials,estimate,lower,upper,target,below_target"
    );

    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("msa.json")).unwrap()).unwrap();
    let again: RunConfig = serde_json::from_value(doc["config"].clone()).unwrap();
    assert_eq!(again, run_cfg);
    assert_eq!(doc["result"]["seed"], 3);
}

#[test]
fn run_config_round_trips() {
    let rc = RunConfig {
        tool: "screened-anderson".into(),
        version: "0.1.0".into(),
        subcommand: "wegner".into(),
        master_seed: u64::MAX,
        format: screened_anderson::cli::Format::Json,
        output: Some("/tmp/x".into()),
        params: serde_json::to_value(screened_anderson::cli::default_wegner()).unwrap(),
    };
    let text = serde_json::to_string(&rc).unwrap();
    assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), rc);
}

#[test]
fn charfun_writes_curve_and_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(args(&[
        "charfun", "--dist", "bernoulli-sym", "--d", "1", "--A", "2", "--ups", "1", "--tmax", "1e6", "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.path().join("charfun.csv")).unwrap();
    assert_eq!(csv.lines().nth(2), Some("t,log_inv_modulus"));
    assert_eq!(csv.lines().count(), 3 + 200);
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("charfun.json")).unwrap()).unwrap();
    let slope = doc["result"]["slope"].as_f64().unwrap();
    assert!((slope - 0.5).abs() < 0.05, "slope {slope}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(args(&["msa", "--bogus"])), 2);
    assert_eq!(run(args(&["frobnicate"])), 2);

    let missing = dir.path().join("nope");
    assert_eq!(run(args(&["selftest", "--out", missing.to_str().unwrap()])), 2);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(run(args(&["msa", "--config", bad.to_str().unwrap()])), 2);

    let mut cfg = default_msa();
    cfg.params.alpha = 1.6; // b - αd < 0
    let invalid = dir.path().join("invalid.json");
    fs::write(&invalid, serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(run(args(&["msa", "--config", invalid.to_str().unwrap()])), 2);

    assert_eq!(run(args(&["concentration", "--eps", "1e-9"])), 2);
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(args(&["selftest", "--format", "json", "--out", dir.path().to_str().unwrap()]));
    assert_eq!(code, 0);
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("selftest.json")).unwrap()).unwrap();
    assert_eq!(doc["result"]["passed"], true);
    assert!(!dir.path().join("selftest.csv").exists());
}

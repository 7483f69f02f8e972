use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn lspm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lspm")).args(args).env("LSPM_LOG", "warn").output().expect("spawn lspm")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn karate() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/zachary_karate.csv")
}

/// Simulates one n = 30 binary network and returns its (network, truth) paths.
fn simulated(dir: &Path) -> (PathBuf, PathBuf) {
    let out = lspm(&["simulate", "--n", "30", "--alpha", "2", "--delta", "0.5,1.1", "--seed", "4", "--out-dir", s(dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    (dir.join("custom/network_000.csv"), dir.join("custom/network_000.truth.json"))
}

const SHORT: [&str; 6] = ["--iters", "3000", "--burnin", "500", "--thin", "10"];

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(code(&lspm(&["--help"])), 0);
    assert_eq!(code(&lspm(&["--version"])), 0);
    assert_eq!(code(&lspm(&[])), 1);
    assert_eq!(code(&lspm(&["fit", "--bogus"])), 1);
    assert_eq!(code(&lspm(&["simulate", "--study", "9", "--out-dir", "x"])), 1);
}

#[test]
fn missing_input_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = lspm(&["fit", "--input", "/nonexistent/net.csv", "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn refuses_too_many_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    // 34 nodes: p = 17 violates p < n/2.
    let out = lspm(&["fit", "--input", s(&karate()), "--dims", "17", "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("p < n / 2"));
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn simulate_fit_diagnose_ppc_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (net, truth) = simulated(&dir.path().join("sim"));
    let run = dir.path().join("run");
    let mut args = vec!["fit", "--input", s(&net), "--format", "dense", "--dims", "3", "--chains", "2", "--seed", "7"];
    args.extend(SHORT);
    args.extend(["--out-dir", s(&run)]);
    let out = lspm(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for k in 0..2 {
        for suffix in ["trace.csv", "z.csv", "reference.csv", "meta.json"] {
            assert!(run.join(format!("chain_{k}_{suffix}")).exists(), "chain {k} {suffix}");
        }
    }
    let manifest = read_json(&run.join("manifest.json"));
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["seeds"], serde_json::json!([7, 8]));
    assert!(manifest["wall_time_secs"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["acceptance"].as_array().unwrap().len(), 2);

    let out = lspm(&["diagnose", "--run-dir", s(&run), "--truth", s(&truth)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&run.join("summary.json"));
    assert_eq!(summary["delta"].as_array().unwrap().len(), 3);
    assert!(summary["r_hat"]["alpha"].as_f64().is_some());
    let corr = summary["procrustes_correlation"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&corr));
    assert!(run.join("aligned_Z.csv").exists());

    let out = lspm(&["ppc", "--run-dir", s(&run), "--replicates", "20", "--truth", s(&truth)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&run.join("ppc_report.json"));
    assert_eq!(report["records"].as_array().unwrap().len(), 20);
    assert!(report["bands"]["density"]["lower"].as_f64().unwrap() <= report["bands"]["density"]["upper"].as_f64().unwrap());
    let metrics = std::fs::read_to_string(run.join("ppc_metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 21);
}

#[test]
fn rerun_from_manifest_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let input = karate();
    let mut args = vec!["fit", "--input", s(&input), "--dims", "2", "--chains", "2", "--jitter", "0.1", "--seed", "3"];
    args.extend(SHORT);
    args.extend(["--out-dir", s(&first)]);
    assert_eq!(code(&lspm(&args)), 0);

    let second = dir.path().join("second");
    let manifest = first.join("manifest.json");
    let out = lspm(&["fit", "--config", s(&manifest), "--out-dir", s(&second)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for k in 0..2 {
        for suffix in ["trace.csv", "z.csv", "reference.csv", "meta.json"] {
            let name = format!("chain_{k}_{suffix}");
            assert_eq!(std::fs::read(first.join(&name)).unwrap(), std::fs::read(second.join(&name)).unwrap(), "{name}");
        }
    }
    assert_eq!(read_json(&first.join("manifest.json"))["config"], read_json(&second.join("manifest.json"))["config"]);

    // Same seed under a different thread count.
    let third = dir.path().join("third");
    let out = lspm(&["--threads", "2", "fit", "--config", s(&manifest), "--out-dir", s(&third)]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(first.join("chain_1_trace.csv")).unwrap(), std::fs::read(third.join("chain_1_trace.csv")).unwrap());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("fit.toml");
    let body = format!(
        "input = {:?}\nchains = 1\n\n[prior]\np = 3\na1 = 2.0\n\n[sampler]\ntotal_iters = 2000\nburn_in = 200\nthin = 20\nseed = 11\n",
        s(&karate())
    );
    std::fs::write(&config, body).unwrap();
    let run = dir.path().join("run");
    let out = lspm(&["fit", "--config", s(&config), "--iters", "1000", "--dims", "2", "--out-dir", s(&run)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = &read_json(&run.join("manifest.json"))["config"];
    assert_eq!(cfg["sampler"]["total_iters"], 1000);
    assert_eq!(cfg["sampler"]["burn_in"], 200);
    assert_eq!(cfg["sampler"]["seed"], 11);
    assert_eq!(cfg["prior"]["p"], 2);
    assert_eq!(cfg["prior"]["a1"], 2.0);
    assert_eq!(cfg["prior"]["b1"], 1.0);

    std::fs::write(&config, "[sampler]\nno_such_key = 1\n").unwrap();
    let out = lspm(&["fit", "--config", s(&config), "--input", s(&karate()), "--out-dir", s(&run)]);
    assert_eq!(code(&out), 1);
}

#[test]
fn poisson_fit_and_ppc_on_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let out = lspm(&[
        "simulate", "--n", "25", "--alpha", "1", "--delta", "0.5,1.1", "--model", "poisson", "--seed", "2", "--out-dir", s(&sim),
    ]);
    assert_eq!(code(&out), 0);
    let run = dir.path().join("run");
    let net = sim.join("custom/network_000.csv");
    let mut args = vec!["fit", "--input", s(&net), "--format", "dense", "--model", "poisson", "--dims", "2"];
    args.extend(SHORT);
    args.extend(["--out-dir", s(&run)]);
    let out = lspm(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = lspm(&["ppc", "--run-dir", s(&run), "--replicates", "10", "--max-count", "5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&run.join("ppc_report.json"));
    assert!(report["pseudo_r2"].as_f64().is_some() || report["pseudo_r2_note"].is_string());
    assert_eq!(report["count_frequency_bands"].as_array().unwrap().len(), 7);
    let header = std::fs::read_to_string(run.join("ppc_metrics.csv")).unwrap();
    assert!(header.lines().next().unwrap().ends_with("freq_5,freq_over_5"));
}

#[test]
fn small_study_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = lspm(&[
        "study", "--study", "1", "--variant", "n=50", "--networks", "1", "--iters", "2000", "--burnin", "500", "--thin", "20",
        "--replicates", "5", "--seed", "1", "--out-dir", s(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(results.lines().count() >= 2);
    assert!(dir.path().join("summary.csv").exists());
    assert_eq!(read_json(&dir.path().join("manifest.json"))["command"], "study");
}

use std::path::Path;
use std::process::Command;

fn fbcert(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_fbcert")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "fbcert {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn gen_data_writes_a_loadable_price_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prices.csv");
    fbcert(&["gen-data", "--s", "40", "--seed", "3", "--out", path.to_str().unwrap()]);
    let text = read(&path);
    assert_eq!(text.lines().count(), 40);
    assert!(text.lines().all(|l| l.split(',').count() == 14));
}

#[test]
fn single_trial_sweep_from_data_file() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices.csv");
    fbcert(&["gen-data", "--s", "300", "--out", prices.to_str().unwrap()]);
    let out = dir.path().join("run");
    fbcert(&[
        "pev-sweep-s",
        "--data",
        prices.to_str().unwrap(),
        "--s",
        "200",
        "--k",
        "50",
        "--trials",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    let trials = read(&out.join("trials_s200.csv"));
    let mut lines = trials.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial_index,s,k,relative_error,epsilon_relative,empirical_risk,runtime_ms"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..3], ["0", "200", "50"]);
    assert_eq!(row[6], "0.0");
    assert!(lines.next().is_none());

    let summary = read(&out.join("summary.csv"));
    let header: Vec<&str> = summary.lines().next().unwrap().split(',').collect();
    let values: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let col = |name: &str| values[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("relerr_median"), col("relerr_q1"));
    assert_eq!(col("relerr_median"), row[3]);
    assert_eq!(col("has_failures"), "false");

    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["version"], "v0.1.0");
    assert_eq!(manifest["config"]["trials"], 1);
    assert!(manifest["result"]["info"]["data_source"].as_str().unwrap().starts_with("file:"));
}

#[test]
fn config_file_keys_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("qp.toml");
    std::fs::write(&cfg, "s_values = [200]\nk_values = [10, 20]\ntrials = 3\nexecution = \"sequential\"\n").unwrap();
    let out = dir.path().join("qp");
    fbcert(&[
        "qp-sweep-k",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(read(&out.join("trials_k10.csv")).lines().count(), 3);
    let table = read(&out.join("k_table.csv"));
    assert!(table.starts_with("row,K=10,K=20\navg_relative_error_x1e-3,"));
}

#[test]
fn failed_trials_are_recorded_not_fatal() {
    // With this seed, trial 0 of the 4-dimensional QP has the origin as its
    // solution, so relative errors are undefined there.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("qp");
    fbcert(&[
        "qp-sweep-k", "--s", "200", "--k", "10", "--trials", "2", "--out", out.to_str().unwrap(),
        "--config", write_config(dir.path(), "qp_dim = 4\n").to_str().unwrap(),
    ]);
    assert_eq!(read(&out.join("trials_k10.csv")).lines().count(), 2);
    let summary = read(&out.join("summary.csv"));
    assert!(summary.lines().nth(1).unwrap().starts_with("200,10,1,1,true,"));
    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["result"]["failures"][0]["trial_index"], 0);
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("extra.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn certify_reports_a_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cert");
    let stdout = fbcert(&[
        "certify", "--problem", "qp", "--s", "500", "--k", "100", "--out", out.to_str().unwrap(),
    ])
    .stdout;
    assert!(String::from_utf8_lossy(&stdout).contains("epsilon ="));
    let report: serde_json::Value = serde_json::from_str(&read(&out.join("certificate.json"))).unwrap();
    let cert = &report["certificate"];
    assert_eq!(cert["regime"], "cocoercive");
    assert_eq!(cert["s"], 500);
    let sum = cert["empirical_term"].as_f64().unwrap()
        + cert["stability_term"].as_f64().unwrap()
        + cert["deviation_term"].as_f64().unwrap();
    assert!((sum - cert["epsilon"].as_f64().unwrap() * cert["gamma"].as_f64().unwrap()).abs() < 1e-12 * sum);
    assert_eq!(report["residual"]["source"], "ground-truth");
}

#[test]
fn invalid_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fbcert"))
        .args(["pev-sweep-s", "--delta", "1.5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta"));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "trails = 3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fbcert"))
        .args(["certify", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
}

use std::path::Path;
use std::process::{Command, Output};

fn tcache(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcache"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn lists_presets() {
    let o = tcache(&["presets"]);
    assert!(o.status.success());
    let names: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert!(names.contains(&"alpha-sweep".to_string()));
    assert!(names.contains(&"ttl-sweep".to_string()));
}

#[test]
fn run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    let text = stdout(&tcache(&["default-config"])).replace("duration_ms = 60000", "duration_ms = 3000");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = tcache(&[
        "--seed",
        "9",
        "--out-dir",
        out.to_str().unwrap(),
        "run",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["config"]["seed"], 9);
    assert_eq!(summary["reads_issued"], 1500);
    for f in ["config.toml", "summary.json", "timeseries.csv", "timeseries.dat"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let echoed = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echoed.contains("seed = 9"));
}

#[test]
fn preset_accepts_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let run = |d: &Path| {
        tcache(&[
            "--seed",
            "4",
            "--out-dir",
            d.to_str().unwrap(),
            "preset",
            "strategy",
            "--override",
            "duration_ms=2000",
            "--override",
            "rates.read_tps=200",
        ])
    };
    let o = run(dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("strategy.csv")).unwrap();
    assert_eq!(csv, stdout(&o));
    assert_eq!(csv.lines().count(), 4);
    let cfg = std::fs::read_to_string(dir.path().join("strategy-EVICT/config.toml")).unwrap();
    assert!(cfg.contains("seed = 4") && cfg.contains("read_tps = 200.0") && cfg.contains("strategy = \"evict\""));

    let again = tempfile::tempdir().unwrap();
    assert!(run(again.path()).status.success());
    assert_eq!(std::fs::read_to_string(again.path().join("strategy.csv")).unwrap(), csv);
}

#[test]
fn validate_small_passes_unbounded() {
    let dir = tempfile::tempdir().unwrap();
    let o = tcache(&["--out-dir", dir.path().to_str().unwrap(), "validate-small", "--trials", "200"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("committed-inconsistent 0 disagreements 0"));
}

#[test]
fn validate_small_reports_counterexamples_without_lists() {
    let dir = tempfile::tempdir().unwrap();
    let o = tcache(&[
        "--out-dir",
        dir.path().to_str().unwrap(),
        "validate-small",
        "--trials",
        "2000",
        "--bound",
        "0",
    ]);
    assert!(!o.status.success());
    let ce: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("counterexample-0.json")).unwrap()).unwrap();
    assert!(ce["trial_seed"].is_u64());
    assert!(ce["events"].as_array().is_some_and(|e| !e.is_empty()));
}

#[test]
fn bad_input_fails_cleanly() {
    let o = tcache(&["preset", "nope"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown preset"));

    let o = tcache(&["preset", "strategy", "--override", "channel.drop_prob=2"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("channel.drop_prob"));

    let o = tcache(&["run", "--config", "/nonexistent.toml"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/nonexistent.toml"));
}

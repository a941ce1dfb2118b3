use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rankdisc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankdisc"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_model(dir: &Path) -> String {
    let path = dir.join("model.json");
    let model = r#"{
        "t": 240, "d": 2, "seed": 5, "replications": 1,
        "change_points": [120],
        "segments": [
            {"kind": "gaussian", "mean": [0, 0], "covariance": {"scalar": 1}},
            {"kind": "gaussian", "mean": [4, 4], "covariance": {"scalar": 1}}
        ]
    }"#;
    fs::write(&path, model).unwrap();
    path.to_str().unwrap().to_owned()
}

fn simulated(dir: &Path) -> String {
    let model = write_model(dir);
    let data = dir.join("data.csv");
    let out = rankdisc(&["simulate", "--spec", &model, "--output", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    data.to_str().unwrap().to_owned()
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(rankdisc(&["--help"]).status.code(), Some(0));
    assert_eq!(rankdisc(&["--version"]).status.code(), Some(0));
    assert_eq!(rankdisc(&["detect", "--help"]).status.code(), Some(0));
}

#[test]
fn exit_codes_separate_usage_data_and_numeric_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rankdisc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(rankdisc(&["lds", "--n", "4", "--dim", "65"]).status.code(), Some(1));
    assert_eq!(rankdisc(&["detect", "--input", "missing.csv"]).status.code(), Some(1));
    assert_eq!(
        rankdisc(&["detect", "--input", "missing.csv", "--tau", "5"])
            .status
            .code(),
        Some(2)
    );

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3,x\n").unwrap();
    let out = rankdisc(&["rank", "--input", bad.to_str().unwrap(), "--no-header"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    let data = simulated(dir.path());
    let out = rankdisc(&["detect", "--input", &data, "--tau", "500"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn lds_writes_the_sobol_prefix() {
    let out = rankdisc(&["lds", "--n", "4", "--dim", "2"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "0,0\n0.5,0.5\n0.75,0.25\n0.25,0.75\n");
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path());
    let a = stdout(&rankdisc(&["simulate", "--spec", &model]));
    let b = stdout(&rankdisc(&["simulate", "--spec", &model]));
    let c = stdout(&rankdisc(&["simulate", "--spec", &model, "--replication", "1"]));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 240);
}

#[test]
fn rank_output_is_a_permutation() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let out = rankdisc(&["rank", "--input", &data]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("y1,y2,sigma"));
    let mut sigma: Vec<usize> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    sigma.sort_unstable();
    assert_eq!(sigma, (0..240).collect::<Vec<_>>());
}

#[test]
fn detect_report_is_deterministic_and_finds_the_change() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let diph = dir.path().join("diph.csv");
    let run = || {
        rankdisc(&[
            "detect",
            "--input",
            &data,
            "--tau",
            "30",
            "--diphoragram-out",
            diph.to_str().unwrap(),
        ])
    };
    let (a, b) = (run(), run());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let doc: Value = serde_json::from_slice(&a.stdout).unwrap();
    let cps = doc["report"]["change_points"].as_array().unwrap();
    assert_eq!(cps.len(), 1);
    assert!(cps[0].as_u64().unwrap().abs_diff(120) <= 15, "{doc}");
    let series = fs::read_to_string(&diph).unwrap();
    assert_eq!(series.lines().count(), 1 + 240 - 30 + 1);
}

#[test]
fn config_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# defaults\ntau = 30\nkernel = centered\nmethod = sma\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let out = rankdisc(&["--config", cfg, "detect", "--input", &data]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["params"]["tau"], 30);
    assert_eq!(doc["params"]["kernel"], "centered");

    let out = rankdisc(&[
        "--config", cfg, "detect", "--input", &data, "--tau", "40", "--kernel", "star",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["params"]["tau"], 40);
    assert_eq!(doc["params"]["kernel"], "star");

    assert_eq!(
        rankdisc(&["--config", "nowhere.cfg", "lds", "--n", "2", "--dim", "1"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn null_table_feeds_detection() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let table = dir.path().join("null.csv");
    let out = rankdisc(&[
        "null-table",
        "--dim",
        "2",
        "--nodes",
        "256",
        "--output",
        table.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("kind,key,value\nmeta,family,star\n"));
    assert_eq!(text.lines().filter(|l| l.starts_with("quantile,")).count(), 3);

    let table = table.to_str().unwrap();
    let out = rankdisc(&["detect", "--input", &data, "--tau", "30", "--null-table", table]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["report"]["detected"], true);

    let three = dir.path().join("three.csv");
    fs::write(&three, "1,2,3\n4,5,6\n7,8,9\n").unwrap();
    let out = rankdisc(&[
        "detect",
        "--input",
        three.to_str().unwrap(),
        "--tau",
        "1",
        "--null-table",
        table,
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_presets() {
    let out = rankdisc(&[
        "experiment",
        "--preset",
        "calibration",
        "--replications",
        "2",
        "--format",
        "json",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!metrics.as_array().unwrap().is_empty());
    assert_eq!(rankdisc(&["experiment", "--preset", "nonsense"]).status.code(), Some(1));
    assert_eq!(rankdisc(&["experiment"]).status.code(), Some(1));
}

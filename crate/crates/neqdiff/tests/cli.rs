//! End-to-end runs of the binary: exit codes and reproducible artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn neqdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neqdiff")).args(args).output().expect("binary runs")
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let args = ["run", "simulate", "--quick", "--seed", "7", "--out", out];
    assert_eq!(neqdiff(&args).status.code(), Some(0));
    let first = snapshot(&tmp.path().join("simulate"));
    assert!(first.contains_key("girsanov.csv") && first.contains_key("summary.json"));
    assert_eq!(neqdiff(&args).status.code(), Some(0));
    assert_eq!(snapshot(&tmp.path().join("simulate")), first);

    let other = tempfile::tempdir().unwrap();
    neqdiff(&["run", "simulate", "--quick", "--seed", "8", "--out", other.path().to_str().unwrap()]);
    assert_ne!(snapshot(&other.path().join("simulate"))["girsanov.csv"], first["girsanov.csv"]);
}

#[test]
fn invalid_configuration_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "schema_version = 1\n[model]\nbeta = -1.0\n").unwrap();
    let out = neqdiff(&["run", "omega-opt", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.beta"));
    assert!(!tmp.path().join("omega-opt").exists());
}

#[test]
fn failing_check_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("coarse.toml");
    fs::write(&path, "schema_version = 1\n[grid]\ncells = 50\n").unwrap();
    let out = neqdiff(&["run", "entropy-brownian", "--config", path.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL production rate (grid brownian)"), "{stdout}");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("entropy-brownian/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], false);
}

#[test]
fn omega_scaling_reports_both_slopes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = neqdiff(&["run", "omega-scaling", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("omega-scaling/summary.json")).unwrap()).unwrap();
    let checks = summary["checks"].as_array().unwrap();
    for name in ["omega slope (small friction)", "omega slope (large friction)"] {
        assert!(checks.iter().any(|c| c["name"] == name && c["passed"] == true), "{name}");
    }
}

#[test]
fn default_config_round_trips() {
    let out = neqdiff(&["default-config"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(neqdiff::ExperimentConfig::from_toml(&text).unwrap(), neqdiff::ExperimentConfig::default());
}

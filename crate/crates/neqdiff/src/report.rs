//! Check verdicts, result tables and the on-disk artifacts of a run.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};

/// One pass/fail verdict with the measured value and its threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: value <= threshold, value, threshold, detail: detail.into() }
    }

    /// Passes when `value ≥ threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: value >= threshold, value, threshold, detail: detail.into() }
    }

    pub fn flag(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, value: f64::from(u8::from(passed)), threshold: 1.0, detail: detail.into() }
    }

    /// A step that errored; recorded as a failed check.
    pub fn errored(name: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Self { name: name.into(), passed: false, value: f64::NAN, threshold: f64::NAN, detail: err.to_string() }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: value {:.6e}, threshold {:.6e}; {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold,
            self.detail
        )
    }
}

/// Columns of numbers written as one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_owned(), columns: columns.iter().map(|c| (*c).to_owned()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub scalars: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_owned(), value);
    }

    pub fn merge(&mut self, other: Outcome) {
        self.checks.extend(other.checks);
        self.scalars.extend(other.scalars);
        self.tables.extend(other.tables);
    }

    pub fn failing(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: &'a str,
    config_hash: &'a str,
    seed: u64,
    quick: bool,
    passed: bool,
    checks: &'a [Check],
    scalars: &'a BTreeMap<String, f64>,
}

/// Writes `<out>/<experiment>/summary.json` and one CSV per table. Every file
/// carries the config hash and seed; nothing time-dependent is written, so
/// reruns are byte-identical.
pub fn write_artifacts(cfg: &ExperimentConfig, experiment: Experiment, outcome: &Outcome) -> io::Result<PathBuf> {
    let dir = cfg.out.join(experiment.name());
    fs::create_dir_all(&dir)?;
    let hash = cfg.hash();
    let summary = Summary {
        experiment: experiment.name(),
        config_hash: &hash,
        seed: cfg.seed,
        quick: cfg.quick,
        passed: outcome.passed(),
        checks: &outcome.checks,
        scalars: &outcome.scalars,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(io::Error::other)?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    for t in &outcome.tables {
        write_table(&dir, t, &hash, cfg.seed)?;
    }
    Ok(dir)
}

fn write_table(dir: &Path, table: &Table, hash: &str, seed: u64) -> io::Result<()> {
    let mut buf = format!("# config_hash={hash} seed={seed}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&table.columns)?;
        for row in &table.rows {
            w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
    }
    fs::write(dir.join(format!("{}.csv", table.name)), buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifacts_embed_hash_and_seed() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { out: tmp.path().to_owned(), seed: 5, ..Default::default() };
        let mut o = Outcome::default();
        o.check(Check::at_most("residual", 1e-9, 1e-6, "ok"));
        let mut t = Table::new("trace", &["s", "r"]);
        t.push(vec![0.0, 1.0]);
        o.tables.push(t);
        let dir = write_artifacts(&cfg, Experiment::Validate, &o).unwrap();
        let csv = fs::read_to_string(dir.join("trace.csv")).unwrap();
        assert!(csv.starts_with(&format!("# config_hash={} seed=5\ns,r\n", cfg.hash())));
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(json["config_hash"], cfg.hash());
        assert_eq!(json["passed"], true);
    }
}

//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line.
//! Tests run one at a time so the runtime budgets measure a single workload.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use neqdiff::experiments as exp;
use neqdiff::{ExperimentConfig, Outcome};

static SERIAL: Mutex<()> = Mutex::new(());

/// Runs `f`, then requires the named checks to pass within `budget`.
fn criterion(number: u32, title: &str, budget: Option<Duration>, names: &[&str], f: impl FnOnce(&ExperimentConfig) -> Outcome) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let cfg = ExperimentConfig::default();
    let start = Instant::now();
    let outcome = f(&cfg);
    let elapsed = start.elapsed();
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for name in names {
        match outcome.checks.iter().find(|c| c.name == *name) {
            Some(c) => {
                details.push(format!("{} = {:.3e} (limit {:.3e})", c.name, c.value, c.threshold));
                if !c.passed {
                    failures.push(c.line());
                }
            }
            None => failures.push(format!("check `{name}` missing")),
        }
    }
    failures.extend(outcome.checks.iter().filter(|c| c.value.is_nan()).map(|c| c.line()));
    if let Some(b) = budget {
        if elapsed > b {
            failures.push(format!("runtime {elapsed:.1?} exceeds {b:.0?}"));
        }
    }
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    // Written to the stdout handle directly so the verdict shows even when output is captured.
    let line = format!("{verdict} criterion {number:>2} ({title}): {}; runtime {elapsed:.2?}\n", details.join(", "));
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(failures.is_empty(), "criterion {number} failed:\n{}", failures.join("\n"));
}

#[test]
fn criterion_01_production_rate_brownian() {
    criterion(
        1,
        "production-rate identity, gaussian brownian",
        Some(Duration::from_secs(5)),
        &["production rate (gaussian brownian)"],
        exp::production_rate_gaussian_brownian,
    );
}

#[test]
fn criterion_02_production_rate_langevin() {
    criterion(
        2,
        "production-rate identity, gaussian langevin",
        Some(Duration::from_secs(10)),
        &["production rate (gaussian langevin)"],
        exp::production_rate_gaussian_langevin,
    );
}

#[test]
fn criterion_03_monotonicity() {
    criterion(3, "monotone relative entropy under time-dependent noise", None, &["monotonicity"], exp::monotonicity_modulated_noise);
}

#[test]
fn criterion_04_brownian_bound() {
    criterion(
        4,
        "brownian entropy bound, both variants",
        Some(Duration::from_secs(60)),
        &["bound (bounded drift)", "bound (lipschitz drift)"],
        exp::bound_theorem1,
    );
}

#[test]
fn criterion_05_determinant_identity() {
    criterion(
        5,
        "fundamental-matrix determinant identity",
        None,
        &["determinant identity (n = 1)", "determinant identity (n = 2)"],
        |_| exp::determinant_identity(),
    );
}

#[test]
fn criterion_06_langevin_exponential_bound() {
    criterion(6, "langevin exponential decay bound", Some(Duration::from_secs(10)), &["exponential decay"], exp::bound_theorem3);
}

#[test]
fn criterion_07_omega_scaling() {
    criterion(
        7,
        "decay-rate scaling in the friction",
        None,
        &["omega slope (small friction)", "omega slope (large friction)"],
        exp::omega_scaling,
    );
}

#[test]
fn criterion_08_vanilla_jarzynski() {
    criterion(8, "vanilla free-energy estimate", Some(Duration::from_secs(60)), &["vanilla estimate"], exp::jarzynski);
}

#[test]
fn criterion_09_zero_variance() {
    criterion(
        9,
        "zero-variance importance sampling",
        None,
        &["optimal coefficient of variation", "coefficient of variation decreases with dt"],
        exp::zero_variance,
    );
}

#[test]
fn criterion_10_reversal_equivalence() {
    criterion(
        10,
        "time reversal equals optimal control",
        Some(Duration::from_secs(120)),
        &[
            "drift identity (gaussian brownian)",
            "drift identity (gaussian langevin)",
            "drift identity (grid brownian)",
            "law equivalence means (brownian)",
            "law equivalence variances (brownian)",
            "law equivalence KS (brownian)",
            "law equivalence means (langevin)",
            "law equivalence variances (langevin)",
            "law equivalence KS (langevin)",
        ],
        exp::reversal_test,
    );
}

#[test]
fn criterion_11_girsanov_normalization() {
    criterion(
        11,
        "girsanov weights average to one",
        None,
        &[
            "girsanov normalization (constant control)",
            "girsanov normalization (state control)",
            "girsanov normalization (state-time control)",
        ],
        exp::girsanov_normalization,
    );
}

#[test]
fn criterion_12_inequalities() {
    criterion(
        12,
        "pinsker and talagrand inequalities",
        None,
        &["pinsker", "talagrand", "talagrand saturation"],
        exp::inequality_sweep,
    );
}

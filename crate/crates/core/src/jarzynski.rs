//! Free-energy differences from nonequilibrium work.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math::{exp, ln, sqrt};
use crate::model::{DiffusionSpec, LangevinSpec, QuadratureConfig};
use crate::sde::{InitialLaw, TrajectoryEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Vanilla,
    ImportanceSampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub kind: EstimatorKind,
    pub delta_f: f64,
    pub std_error: f64,
    /// Natural log of each per-path estimator value.
    pub log_values: Vec<f64>,
    pub beta: f64,
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Sample mean of the work, recorded for the vanilla estimator.
    pub mean_work: Option<f64>,
}

impl EstimatorReport {
    /// Per-path estimator values; may overflow for extreme work.
    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|l| exp(*l)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceReport {
    pub variance: f64,
    pub coefficient_of_variation: f64,
    pub effective_sample_size: f64,
}

/// Log-sum-exp reduction to `(ln mean e^{l}, CV of e^{l})`.
fn log_mean_and_cv(logs: &[f64]) -> Result<(f64, f64)> {
    let n = logs.len();
    if n < 2 {
        return Err(invalid("need at least two paths"));
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let shifted: Vec<f64> = logs.iter().map(|l| exp(l - top)).collect();
    let m = shifted.iter().sum::<f64>() / n as f64;
    let var = shifted.iter().map(|w| (w - m) * (w - m)).sum::<f64>() / (n - 1) as f64;
    Ok((top + ln(m), sqrt(var) / m))
}

fn report(kind: EstimatorKind, log_values: Vec<f64>, ensemble: &TrajectoryEnsemble, beta: f64) -> Result<EstimatorReport> {
    let (log_mean, cv) = log_mean_and_cv(&log_values)?;
    let n = log_values.len();
    Ok(EstimatorReport {
        kind,
        delta_f: -log_mean / beta,
        // delta method for the logarithm of a mean
        std_error: cv / (beta * sqrt(n as f64)),
        log_values,
        beta,
        paths: n,
        dt: ensemble.dt,
        seed: ensemble.seed,
        mean_work: None,
    })
}

/// `ΔF̂ = −β⁻¹ ln mean e^{−βW}` over an uncontrolled ensemble started at
/// the equilibrium law of time 0.
pub fn estimate_free_energy_vanilla(ensemble: &TrajectoryEnsemble, beta: f64) -> Result<EstimatorReport> {
    let logs = ensemble.work.iter().map(|w| -beta * w).collect();
    let mut r = report(EstimatorKind::Vanilla, logs, ensemble, beta)?;
    r.mean_work = Some(ensemble.work.iter().sum::<f64>() / ensemble.len() as f64);
    Ok(r)
}

/// Log-density of the time-0 equilibrium law, `−βE(x) − ln Z`.
pub struct EquilibriumDensity {
    energy: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    beta: f64,
    log_normalizer: f64,
}

impl EquilibriumDensity {
    pub fn log_density(&self, x: &[f64]) -> f64 {
        -self.beta * (self.energy)(x) - self.log_normalizer
    }

    /// `ν₀^∞` of a Brownian spec.
    pub fn brownian(spec: &DiffusionSpec) -> Result<Self> {
        let z = match spec.potential.quadratic(0.0) {
            Some(_) => spec.gaussian_partition_function(0.0)?,
            None => spec.partition_function(0.0, &spec.default_quadrature(0.0))?,
        };
        let potential = spec.potential.clone();
        Ok(Self { energy: Box::new(move |x| potential.value(x, 0.0)), beta: spec.beta, log_normalizer: ln(z.normalizer) })
    }

    /// `π₀^∞` of a Langevin spec.
    pub fn langevin(spec: &LangevinSpec) -> Result<Self> {
        let z = match spec.potential.quadratic(0.0) {
            Some(_) => spec.gaussian_partition_function(0.0)?,
            None => spec.partition_function(
                0.0,
                &QuadratureConfig::gaussian_envelope(spec.potential.as_ref(), spec.dim, spec.beta, 0.0),
            )?,
        };
        let s = spec.clone();
        Ok(Self { energy: Box::new(move |z| s.hamiltonian(z, 0.0)), beta: spec.beta, log_normalizer: ln(z.normalizer) })
    }
}

/// Per-path value `e^{−βW} (dν₀^∞/dν̄₀)(x₀) e^{Girsanov log-weight}` over a
/// controlled ensemble started from `sampling`.
pub fn estimate_free_energy_is(
    ensemble: &TrajectoryEnsemble,
    beta: f64,
    target: &EquilibriumDensity,
    sampling: &dyn InitialLaw,
) -> Result<EstimatorReport> {
    let mut logs = Vec::with_capacity(ensemble.len());
    for p in 0..ensemble.len() {
        let x0 = ensemble.initial_state(p);
        let q = sampling
            .log_density(x0)
            .ok_or_else(|| invalid("sampling law has no evaluable density"))?;
        if !(q > f64::NEG_INFINITY) {
            return Err(Error::ZeroSamplingDensity { point: x0.to_vec() });
        }
        logs.push(-beta * ensemble.work[p] + target.log_density(x0) - q + ensemble.log_weight[p]);
    }
    report(EstimatorKind::ImportanceSampled, logs, ensemble, beta)
}

pub fn variance_report(report: &EstimatorReport) -> VarianceReport {
    let n = report.log_values.len();
    let top = report.log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = report.log_values.iter().map(|l| exp(l - top)).collect();
    let sum: f64 = w.iter().sum();
    let sum_sq: f64 = w.iter().map(|v| v * v).sum();
    let m = sum / n as f64;
    let shifted_var = if n > 1 { w.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    let scale = exp(2.0 * top);
    VarianceReport {
        variance: shifted_var * scale,
        coefficient_of_variation: sqrt(shifted_var) / m,
        effective_sample_size: sum * sum / sum_sq,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ensemble(work: Vec<f64>) -> TrajectoryEnsemble {
        let n = work.len();
        TrajectoryEnsemble {
            dim: 1,
            dt: 1e-3,
            seed: 0,
            times: vec![1.0],
            steps: vec![1000],
            path_index: (0..n).collect(),
            initial: vec![0.0; n],
            states: vec![0.0; n],
            log_weight: vec![0.0; n],
            work,
            flagged: vec![],
        }
    }

    #[test]
    fn zero_work_gives_zero_free_energy() {
        let r = estimate_free_energy_vanilla(&ensemble(vec![0.0; 50]), 2.0).unwrap();
        assert_eq!(r.delta_f, 0.0);
        assert_eq!(r.std_error, 0.0);
        let v = variance_report(&r);
        assert_eq!(v.variance, 0.0);
        assert_eq!(v.effective_sample_size, 50.0);
    }

    #[test]
    fn large_work_does_not_underflow() {
        let r = estimate_free_energy_vanilla(&ensemble(vec![1e4, 1e4 + 1.0]), 1.0).unwrap();
        let exact = 1e4 - ln(0.5 * (1.0 + exp(-1.0)));
        assert!((r.delta_f - exact).abs() < 1e-9);
    }

    #[test]
    fn infinite_work_is_degenerate() {
        let e = estimate_free_energy_vanilla(&ensemble(vec![f64::INFINITY; 3]), 1.0);
        assert!(matches!(e, Err(Error::DegenerateWeights)));
    }

    #[test]
    fn jensen_holds_at_sample_level() {
        let r = estimate_free_energy_vanilla(&ensemble(vec![0.3, -0.2, 1.5, 0.9]), 1.3).unwrap();
        assert!(r.mean_work.unwrap() >= r.delta_f);
    }
}

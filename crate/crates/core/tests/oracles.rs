//! Reference values computed independently (adaptive ODE integration at
//! tolerance 1e-13 and dense symmetric eigensolvers) and frozen here.

use std::sync::Arc;

use neqdiff_core::entropy::{bakry_emery_kappa, hypocoercivity_certificate};
use neqdiff_core::gaussian::{langevin_propagator, ou_moments, GaussianLaw, LinearSde};
use neqdiff_core::linalg::{Mat, Vector};
use neqdiff_core::model::{DiffusionSpec, LangevinSpec, QuadraticPotential, Schedule, TanhPerturbedPotential};
use neqdiff_core::reversal::{reverse_spec, GaussianReverseLaws};

fn ramp_spec() -> DiffusionSpec {
    let pot = Arc::new(QuadraticPotential::new(1, Schedule::ramp(1.0, 2.0, 1.0)));
    DiffusionSpec::new(1, pot, 1.0, 1.0).unwrap()
}

#[test]
fn ou_moments_under_stiffness_ramp() {
    let law = ou_moments(&ramp_spec(), &GaussianLaw::scalar(1.0, 0.25).unwrap(), 1.0).unwrap();
    assert!((law.mean[0] - 0.223130160148432).abs() < 1e-9, "{}", law.mean[0]);
    assert!((law.cov[(0, 0)] - 0.56154874254351).abs() < 1e-9, "{}", law.cov[(0, 0)]);
}

#[test]
fn reverse_process_started_at_terminal_equilibrium() {
    let spec = ramp_spec();
    let rev = LinearSde::brownian(&reverse_spec(&spec)).unwrap();
    let law = rev.propagate(&spec.gibbs_gaussian(1.0).unwrap(), 0.0, 1.0, 1e-3).unwrap();
    assert!((law.cov[(0, 0)] - 0.760228227089285).abs() < 1e-9, "{}", law.cov[(0, 0)]);
    let stored = GaussianReverseLaws::brownian(&spec).unwrap().law_at(1.0).unwrap();
    assert!((stored.cov[(0, 0)] - 0.760228227089285).abs() < 1e-9);
}

#[test]
fn langevin_moments_with_unit_friction() {
    let pot = Arc::new(QuadraticPotential::new(1, Schedule::Constant(1.0)));
    let spec = LangevinSpec::new(1, pot, 1.0, 1.0, 1.0).unwrap();
    let init = GaussianLaw::new(Vector::from_vec(vec![1.0, 0.0]), Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0])).unwrap();
    let law = LinearSde::langevin(&spec).unwrap().propagate(&init, 0.0, 1.0, 1e-3).unwrap();
    let mean = [0.65970015, -0.5335072];
    let cov = [1.06702778, 0.24330224, 0.24330224, 0.8736097];
    for i in 0..2 {
        assert!((law.mean[i] - mean[i]).abs() < 1e-7, "mean {i}: {}", law.mean[i]);
    }
    for (k, c) in cov.iter().enumerate() {
        assert!((law.cov[(k / 2, k % 2)] - c).abs() < 1e-7, "cov {k}: {}", law.cov[(k / 2, k % 2)]);
    }
    let gamma = langevin_propagator(&spec, &[0.0, 1.0], 1e-3).unwrap();
    let pushed = gamma.pushforward(&init, 1).unwrap();
    assert!((pushed.cov - law.cov).amax() < 1e-8);
}

#[test]
fn worked_certificate() {
    let cert = hypocoercivity_certificate(0.05, 0.04, 0.05, 1.0, 1.0, 0.0, 1.0).unwrap();
    assert!((cert.lambda_tilde.0 - 0.0218847050625473).abs() < 1e-12);
    assert!((cert.omega - 0.0185463602224977).abs() < 1e-12);
}

#[test]
fn convexity_margin_of_tanh_perturbation() {
    let pot = TanhPerturbedPotential { dim: 1, amplitude: Schedule::Constant(0.5) };
    let probes: Vec<Vec<f64>> = (0..=4000).map(|i| vec![-4.0 + 2e-3 * i as f64]).collect();
    let kappa = bakry_emery_kappa(&pot, 1, 1.0, 0.0, &probes).unwrap();
    assert!((kappa - 0.615099820540249).abs() < 1e-6, "{kappa}");
}

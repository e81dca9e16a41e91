//! Invariants checked on randomly drawn inputs.

use std::sync::Arc;

use neqdiff_core::entropy::{gaussian_lsi_constant, hypocoercivity_certificate, pinsker_talagrand_report};
use neqdiff_core::fokker_planck::{relative_entropy_grid, solve_fp_1d, FpConfig};
use neqdiff_core::gaussian::{gaussian_kl, GaussianLaw};
use neqdiff_core::grid::{Axis, GridDensity};
use neqdiff_core::jarzynski::{estimate_free_energy_vanilla, variance_report};
use neqdiff_core::model::{DiffusionSpec, LinearCirculation, QuadraticPotential, Schedule};
use neqdiff_core::reversal::reverse_spec;
use neqdiff_core::sde::{simulate, BrownianSystem, SimulationConfig, TrajectoryEnsemble, ZeroControl};
use proptest::prelude::*;

fn ramp_spec(k0: f64, k1: f64, beta: f64) -> DiffusionSpec {
    let pot = Arc::new(QuadraticPotential::new(1, Schedule::ramp(k0, k1, 1.0)));
    DiffusionSpec::new(1, pot, beta, 1.0).unwrap()
}

fn work_ensemble(work: Vec<f64>) -> TrajectoryEnsemble {
    let n = work.len();
    TrajectoryEnsemble {
        dim: 1,
        dt: 1e-2,
        seed: 0,
        times: vec![0.0],
        steps: vec![0],
        path_index: (0..n).collect(),
        initial: vec![0.0; n],
        states: vec![0.0; n],
        work,
        log_weight: vec![0.0; n],
        flagged: Vec::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_inequalities(m1 in -3.0..3.0f64, v1 in 0.1..4.0f64, m2 in -3.0..3.0f64, v2 in 0.1..4.0f64) {
        let p = GaussianLaw::scalar(m1, v1).unwrap();
        let q = GaussianLaw::scalar(m2, v2).unwrap();
        prop_assert!(gaussian_kl(&p, &q).unwrap() >= -1e-14);
        prop_assert!(gaussian_kl(&p, &p).unwrap().abs() < 1e-14);
        let r = pinsker_talagrand_report(&p, &q, gaussian_lsi_constant(&q)).unwrap();
        prop_assert!(r.pinsker_holds(1e-12), "{r:?}");
        prop_assert!(r.talagrand_holds(1e-12), "{r:?}");
    }

    #[test]
    fn certificate_rate_grows_with_kappa(a in 0.01..1.0f64, rb in 0.0..0.99f64, xi in 0.1..10.0f64, kappa in 0.05..2.0f64) {
        let c = a;
        let b = rb * a;
        if let Ok(cert) = hypocoercivity_certificate(a, b, c, xi, 1.0, 0.0, kappa) {
            prop_assert!(cert.omega > 0.0 && cert.lambda.0 >= 0.0 && cert.lambda_tilde.0 > 0.0);
            let stronger = cert.with_kappa(2.0 * kappa).unwrap();
            prop_assert!(stronger.omega >= cert.omega);
        }
    }

    #[test]
    fn grid_solver_conserves_mass_and_sign(m1 in -2.0..2.0f64, m2 in -2.0..2.0f64, w in 0.0..1.0f64, sd in 0.3..1.0f64) {
        let spec = ramp_spec(1.0, 2.0, 1.0);
        let axis = Axis::new(-12.0, 12.0, 240);
        let init = GridDensity::from_log_fn(vec![axis], 0.0, |x| {
            let g = |m: f64| (-(x[0] - m) * (x[0] - m) / (2.0 * sd * sd)).exp();
            (w * g(m1) + (1.0 - w) * g(m2) + 1e-300).ln()
        }).unwrap();
        let out = solve_fp_1d(&spec, &init, &[0.0, 0.1, 0.2], &FpConfig::new(1e-2)).unwrap();
        let gibbs = GridDensity::from_log_fn(init.axes.clone(), 0.2, |x| -x[0] * x[0] * 1.2 / 2.0).unwrap();
        for d in &out {
            prop_assert!((d.mass() - 1.0).abs() < 1e-10, "mass {}", d.mass());
            prop_assert!(d.min_value() >= 0.0);
        }
        prop_assert!(relative_entropy_grid(&out[2], &gibbs).unwrap() >= -1e-12);
    }

    #[test]
    fn free_energy_estimate_below_mean_work(work in prop::collection::vec(-5.0..5.0f64, 2..200), beta in 0.1..4.0f64) {
        let ens = work_ensemble(work.clone());
        let report = estimate_free_energy_vanilla(&ens, beta).unwrap();
        let mean = work.iter().sum::<f64>() / work.len() as f64;
        prop_assert!(report.delta_f <= mean + 1e-12);
        let ess = variance_report(&report).effective_sample_size;
        prop_assert!(ess >= 1.0 - 1e-9 && ess <= work.len() as f64 + 1e-9);
    }

    #[test]
    fn reversing_twice_restores_the_drift(x in -3.0..3.0f64, y in -3.0..3.0f64, s in 0.0..1.0f64, w in -2.0..2.0f64) {
        let pot = Arc::new(QuadraticPotential::new(2, Schedule::ramp(1.0, 3.0, 1.0)));
        let spec = DiffusionSpec::new(2, pot, 1.5, 1.0).unwrap().with_circulation(Arc::new(LinearCirculation::rotation(w)));
        let twice = reverse_spec(&reverse_spec(&spec));
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        spec.drift(&[x, y], s, &mut a);
        twice.drift(&[x, y], s, &mut b);
        prop_assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulation_is_seed_deterministic(seed in any::<u64>(), k1 in 0.5..3.0f64) {
        let spec = ramp_spec(1.0, k1, 1.0);
        let sys = BrownianSystem::forward(&spec);
        let init = spec.gibbs_gaussian(0.0).unwrap();
        let cfg = SimulationConfig::new(50, 1e-2, seed);
        let a = simulate(&sys, None, &init, &cfg).unwrap();
        prop_assert_eq!(&a, &simulate(&sys, None, &init, &cfg).unwrap());
        let zero = simulate(&sys, Some(&ZeroControl(1)), &init, &cfg).unwrap();
        prop_assert!(zero.log_weight.iter().all(|l| *l == 0.0));
        prop_assert_eq!(&zero.work, &a.work);
    }

    #[test]
    fn static_potential_does_no_work(seed in any::<u64>(), k in 0.5..3.0f64) {
        let spec = ramp_spec(k, k, 1.0);
        let init = spec.gibbs_gaussian(0.0).unwrap();
        let ens = simulate(&BrownianSystem::forward(&spec), None, &init, &SimulationConfig::new(20, 1e-2, seed)).unwrap();
        prop_assert!(ens.work.iter().all(|w| *w == 0.0));
    }
}

//! The verification suites behind each CLI subcommand.

use std::f64::consts::PI;
use std::fmt::Display;
use std::sync::Arc;

use neqdiff_core::control::{brownian_control_solution, langevin_control_solution, solve_g_pde_1d, ControlSolution, GSolveConfig};
use neqdiff_core::entropy::{
    bakry_emery_kappa, gaussian_lsi_constant, hypocoercivity_certificate, optimize_omega, pinsker_talagrand_report,
    production_rate_check_brownian, production_rate_check_brownian_grid, production_rate_check_langevin,
    production_rate_check_langevin_grid, theorem1_bound, theorem3_bound, theorem3_bound_time_dependent, DriftBound,
    EntropyTrace, HypocoercivityCertificate,
};
use neqdiff_core::fokker_planck::{gibbs_axis, phase_space_axes, relative_entropy_grid, solve_fp_1d, solve_kinetic_fp_2d, FpConfig};
use neqdiff_core::gaussian::{gaussian_modified_functional, langevin_propagator, ou_moments, GaussianLaw};
use neqdiff_core::grid::GridDensity;
use neqdiff_core::jarzynski::{estimate_free_energy_is, estimate_free_energy_vanilla, variance_report, EquilibriumDensity};
use neqdiff_core::linalg::{Mat, Vector};
use neqdiff_core::model::{
    validate_spec, DiffusionSpec, LangevinSpec, ProbeGrid, QuadraticPotential, ScalarNoise, Schedule,
    TanhPerturbedPotential,
};
use neqdiff_core::reversal::{
    brownian_law_equivalence, controlled_drift, drift_identity_check, langevin_law_equivalence, reversal_drift,
    reversal_drift_langevin, reverse_density_grid, EquivalenceConfig, EquivalenceReport, GaussianReverseLaws,
    GridReverseDensities,
};
use neqdiff_core::sde::{
    BrownianSystem, ConstantControl, ControlField, FnControl, LangevinSystem, SimulationConfig,
};
use neqdiff_core::stats::{mean, std_error, variance, variance_std_error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig};
use crate::parallel;
use crate::report::{Check, Outcome, Table};

/// Tolerance of the grid-based drift identity.
pub const GRID_DRIFT_TOLERANCE: f64 = 2e-3;

type Res<T> = neqdiff_core::Result<T>;

/// Runs `f`, turning an error into a failed check named `name`.
fn guarded(out: &mut Outcome, name: &str, f: impl FnOnce(&mut Outcome) -> Res<()>) {
    if let Err(e) = f(out) {
        out.check(Check::errored(name, e));
    }
}

fn uniform_times(end: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals).map(|k| end * k as f64 / intervals as f64).collect()
}

fn trace_table(name: &str, trace: &EntropyTrace) -> Table {
    let mut t = Table::new(name, &["s", "relative_entropy", "derivative", "rhs", "residual", "fisher"]);
    for k in 0..trace.times.len() {
        let (d, r) = (trace.derivative[k], trace.rhs[k]);
        t.push(vec![trace.times[k], trace.relative_entropy[k], d, r, (d - r).abs(), trace.fisher[k]]);
    }
    t
}

// ---- model family --------------------------------------------------------

/// `V = k(s)x²/2` with `k` ramping between the configured stiffnesses.
pub fn stiffness_spec(cfg: &ExperimentConfig) -> Res<DiffusionSpec> {
    let m = &cfg.model;
    let pot = QuadraticPotential::new(1, Schedule::ramp(m.stiffness_start, m.stiffness_end, m.horizon));
    DiffusionSpec::new(1, Arc::new(pot), m.beta, m.horizon)
}

/// Phase-space counterpart of [`stiffness_spec`].
pub fn langevin_stiffness_spec(cfg: &ExperimentConfig) -> Res<LangevinSpec> {
    let m = &cfg.model;
    let pot = QuadraticPotential::new(1, Schedule::ramp(m.stiffness_start, m.stiffness_end, m.horizon));
    LangevinSpec::new(1, Arc::new(pot), m.friction, m.beta, m.horizon)
}

/// `V = x²/2 + a(s) tanh x`, `a(s) = amplitude · sin(πs/T)`.
pub fn tanh_spec(cfg: &ExperimentConfig) -> Res<DiffusionSpec> {
    let m = &cfg.model;
    let pot = TanhPerturbedPotential { dim: 1, amplitude: tanh_amplitude(cfg) };
    DiffusionSpec::new(1, Arc::new(pot), m.beta, m.horizon)
}

fn tanh_amplitude(cfg: &ExperimentConfig) -> Schedule {
    Schedule::Sine { offset: 0.0, amplitude: cfg.model.tanh_amplitude, frequency: PI / cfg.model.horizon }
}

/// Time-independent quadratic potential with noise `σ(s) = 1 + ½ sin(6s)`.
pub fn modulated_noise_spec(cfg: &ExperimentConfig) -> Res<DiffusionSpec> {
    let m = &cfg.model;
    let pot = QuadraticPotential::new(1, Schedule::Constant(m.stiffness_start));
    let noise = ScalarNoise { dim: 1, scale: Schedule::Sine { offset: 1.0, amplitude: 0.5, frequency: 6.0 } };
    DiffusionSpec::new(1, Arc::new(pot), m.beta, m.horizon)?.with_noise(Arc::new(noise), 0.25)
}

/// Checks every spec an experiment uses; run before any simulation.
pub fn preflight(cfg: &ExperimentConfig) -> Result<(), Vec<String>> {
    let mut errs = Vec::new();
    let probes = ProbeGrid::uniform(1, 4.0, 41, uniform_times(cfg.model.horizon, 10));
    for (name, spec) in [
        ("stiffness", stiffness_spec(cfg)),
        ("tanh", tanh_spec(cfg)),
        ("modulated-noise", modulated_noise_spec(cfg)),
    ] {
        match spec.and_then(|s| validate_spec(&s, &probes, 1e-8)) {
            Ok(r) if r.passed => {}
            Ok(r) => errs.extend(r.failures().into_iter().map(|f| format!("{name} spec: {f}"))),
            Err(e) => errs.push(format!("{name} spec: {e}")),
        }
    }
    if let Err(e) = langevin_stiffness_spec(cfg) {
        errs.push(format!("langevin spec: {e}"));
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

// ---- experiments -----------------------------------------------------------

pub fn run(cfg: &ExperimentConfig, experiment: Experiment) -> Outcome {
    match experiment {
        Experiment::Validate => validate(cfg),
        Experiment::Simulate => simulate(cfg),
        Experiment::EntropyBrownian => entropy_brownian(cfg),
        Experiment::EntropyLangevin => entropy_langevin(cfg),
        Experiment::BoundTheorem1 => bound_theorem1(cfg),
        Experiment::BoundTheorem3 => bound_theorem3(cfg),
        Experiment::Jarzynski => jarzynski(cfg),
        Experiment::ZeroVariance => zero_variance(cfg),
        Experiment::ReversalTest => reversal_test(cfg),
        Experiment::OmegaOpt => omega_opt(cfg),
        Experiment::OmegaScaling => omega_scaling(cfg),
        Experiment::All => {
            let mut all = Outcome::default();
            for (e, o) in run_suite(cfg) {
                for mut c in o.checks {
                    c.name = format!("{e}/{}", c.name);
                    all.check(c);
                }
                all.scalars.extend(o.scalars.into_iter().map(|(k, v)| (format!("{e}/{k}"), v)));
            }
            all
        }
    }
}

/// Every experiment of the suite, concurrently on `cfg.jobs` threads.
pub fn run_suite(cfg: &ExperimentConfig) -> Vec<(Experiment, Outcome)> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build().expect("thread pool");
    pool.install(|| Experiment::SUITE.par_iter().map(|&e| (e, run(cfg, e))).collect())
}

pub fn validate(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    match preflight(cfg) {
        Ok(()) => out.check(Check::flag("specs valid", true, "all specs pass the drift and noise validation")),
        Err(errs) => out.check(Check::flag("specs valid", false, errs.join("; "))),
    }
    out
}

pub fn simulate(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    guarded(&mut out, "terminal moments", |out| {
        let spec = stiffness_spec(cfg)?;
        let init = GaussianLaw::scalar(1.0, 0.25)?;
        let sim = SimulationConfig::new(cfg.monte_carlo.paths, cfg.monte_carlo.dt, cfg.seed);
        let ens = parallel::simulate(&BrownianSystem::forward(&spec), None, &init, &sim)?;
        let x = ens.terminal_component(0);
        let exact = ou_moments(&spec, &init, spec.horizon)?;
        let (m, v) = (exact.mean[0], exact.cov[(0, 0)]);
        let slack = 2.0 * cfg.monte_carlo.dt;
        out.check(Check::at_most(
            "terminal mean",
            (mean(&x) - m).abs(),
            4.0 * std_error(&x) + slack,
            format!("ensemble {:.5} vs exact {m:.5}", mean(&x)),
        ));
        out.check(Check::at_most(
            "terminal variance",
            (variance(&x) - v).abs(),
            4.0 * variance_std_error(&x) + slack,
            format!("ensemble {:.5} vs exact {v:.5}", variance(&x)),
        ));
        Ok(())
    });
    out.merge(girsanov_normalization(cfg));
    out
}

/// `E[e^{log-weight}] = 1` for three bounded controls.
pub fn girsanov_normalization(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    let controls: [(&str, Arc<dyn ControlField>); 3] = [
        ("constant control", Arc::new(ConstantControl(vec![0.5]))),
        ("state control", Arc::new(FnControl::new(1, |x, _, u| u[0] = 0.8 * x[0].sin()))),
        ("state-time control", Arc::new(FnControl::new(1, |x, s, u| u[0] = 0.6 * x[0].tanh() * (2.0 * PI * s).cos()))),
    ];
    let mut table = Table::new("girsanov", &["control", "mean_weight", "std_error"]);
    for (k, (name, u)) in controls.iter().enumerate() {
        guarded(&mut out, name, |out| {
            let spec = stiffness_spec(cfg)?;
            let init = spec.gibbs_gaussian(0.0)?;
            let sim = SimulationConfig::new(cfg.monte_carlo.paths, cfg.monte_carlo.dt, cfg.seed + 100 + k as u64);
            let ens = parallel::simulate(&BrownianSystem::forward(&spec), Some(u.as_ref()), &init, &sim)?;
            let w: Vec<f64> = ens.log_weight.iter().map(|l| l.exp()).collect();
            let (m, se) = (mean(&w), std_error(&w));
            table.push(vec![k as f64, m, se]);
            out.check(Check::at_most(
                format!("girsanov normalization ({name})"),
                (m - 1.0).abs() / se,
                4.0,
                format!("mean weight {m:.5} ± {se:.5}"),
            ));
            Ok(())
        });
    }
    out.tables.push(table);
    out
}

pub fn entropy_brownian(cfg: &ExperimentConfig) -> Outcome {
    let mut out = production_rate_gaussian_brownian(cfg);
    out.merge(production_rate_grid_brownian(cfg));
    out.merge(monotonicity_modulated_noise(cfg));
    out.merge(inequality_sweep(cfg));
    out
}

/// Time-independent quadratic `V`, Gaussian non-equilibrium start, all closed form.
pub fn production_rate_gaussian_brownian(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    guarded(&mut out, "production rate (gaussian brownian)", |out| {
        let m = &cfg.model;
        let pot = QuadraticPotential::new(1, Schedule::Constant(m.stiffness_start));
        let spec = DiffusionSpec::new(1, Arc::new(pot), m.beta, m.horizon)?;
        let init = GaussianLaw::scalar(1.5, 0.3)?;
        let times = uniform_times(m.horizon, 1000);
        let laws = times.iter().map(|&s| ou_moments(&spec, &init, s)).collect::<Res<Vec<_>>>()?;
        let trace = production_rate_check_brownian(&spec, &laws, &times)?;
        out.check(Check::at_most("production rate (gaussian brownian)", trace.max_residual(), 1e-6, "max |dR/ds − RHS|"));
        out.tables.push(trace_table("production_rate_gaussian", &trace));
        Ok(())
    });
    out
}

/// Ramp `k(s) = 1 + s/2` on the grid solver.
pub fn production_rate_grid_brownian(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    guarded(&mut out, "production rate (grid brownian)", |out| {
        let m = &cfg.model;
        let pot = QuadraticPotential::new(1, Schedule::ramp(1.0, 1.5, 1.0));
        let spec = DiffusionSpec::new(1, Arc::new(pot), m.beta, 1.0)?;
        let axis = gibbs_axis(&spec, 0.0, 2 * cfg.grid.cells);
        let init = GridDensity::from_log_fn(vec![axis], 0.0, |x| -(x[0] - 1.0) * (x[0] - 1.0))?.normalized();
        let d = solve_fp_1d(&spec, &init, &uniform_times(1.0, 100), &FpConfig::new(cfg.grid.dt / 4.0).crank_nicolson())?;
        let trace = production_rate_check_brownian_grid(&spec, &d)?;
        out.check(Check::at_most("production rate (grid brownian)", trace.max_residual(), 1e-4, "max |dR/ds − RHS|"));
        out.tables.push(trace_table("production_rate_grid", &trace));
        Ok(())
    });
    out
}

/// Time-independent `V` with time-dependent `σ(s)`: `R` must not increase.
pub fn monotonicity_modulated_noise(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    guarded(&mut out, "monotonicity", |out| {
        let spec = modulated_noise_spec(cfg)?;
        let axis = gibbs_axis(&spec, 0.0, cfg.grid.cells);
        let init = GridDensity::from_log_fn(vec![axis], 0.0, |x| -(x[0] - 1.0) * (x[0] - 1.0))?.normalized();
        let times = uniform_times(spec.horizon, 100);
        let d = solve_fp_1d(&spec, &init, &times, &FpConfig::new(cfg.grid.dt))?;
        let trace = production_rate_check_brownian_grid(&spec, &d)?;
        out.check(Check::at_most("monotonicity", trace.max_derivative(), 1e-6, "max dR/ds"));
        out.tables.push(trace_table("monotonicity", &trace));
        Ok(())
    });
    out
}

/// Pinsker and Talagrand on seeded Gaussian pairs, plus the saturating translation case.
pub fn inequality_sweep(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    guarded(&mut out, "pinsker and talagrand", |out| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (mut pinsker_slack, mut talagrand_slack) = (f64::INFINITY, f64::INFINITY);
        for _ in 0..100 {
            let p = GaussianLaw::scalar(rng.random_range(-2.0..2.0), rng.random_range(0.2..3.0))?;
            let q = GaussianLaw::scalar(rng.random_range(-2.0..2.0), rng.random_range(0.2..3.0))?;
            let r = pinsker_talagrand_report(&p, &q, gaussian_lsi_constant(&q))?;
            pinsker_slack = pinsker_slack.min(r.pinsker_bound - r.tv);
            talagrand_slack = talagrand_slack.min(r.talagrand_bound - r.w2.unwrap_or(f64::NAN));
        }
        out.check(Check::at_least("pinsker", pinsker_slack, 0.0, "min of √(2KL) − ‖P − Q‖₁ over 100 pairs"));
        out.check(Check::at_least("talagrand", talagrand_slack, 0.0, "min of √(2KL/κ) − W₂ over 100 pairs"));
        let mut worst: f64 = 0.0;
        for (shift, var) in [(1.0, 1.0), (0.3, 2.5), (-1.7, 0.4)] {
            let p = GaussianLaw::scalar(shift, var)?;
            let q = GaussianLaw::scalar(0.0, var)?;
            let r = pinsker_talagrand_report(&p, &q, 1.0 / var)?;
            worst = worst.max((r.w2.unwrap_or(f64::NAN) - r.talagrand_bound).abs());
        }
        out.check(Check::at_most("talagrand saturation", worst, 1e-12, "|W₂ − √(2KL/κ)| for pure translations"));
        Ok(())
    });
    out
}

pub fn entropy_langevin(cfg: &ExperimentConfig) -> Outcome {
    let mut out = production_rate_gaussian_langevin(cfg);
    out.merge(determinant_identity());
    out.merge(kinetic_monotonicity(cfg));
    out
}

/// `η(s) = 1 + s/4` through the fundamental-matrix pushforward.
pub fn production_rate_gaussian_langevin(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    guarded(&mut out, "production rate (gaussian langevin)", |out| {
        let m = &cfg.model;
        let pot = QuadraticPotential::new(1, Schedule::ramp(1.0, 1.25, 1.0));
        let spec = LangevinSpec::new(1, Arc::new(pot), m.friction, m.beta, 1.0)?;
        let times = uniform_times(1.0, 1000);
        let fm = langevin_propagator(&spec, &times, 1e-4)?;
        let init = GaussianLaw::new(Vector::from_vec(vec![1.0, -0.5]), Mat::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 1.5]))?;
        let laws = (0..times.len()).map(|k| fm.pushforward(&init, k)).collect::<Res<Vec<_>>>()?;
        let trace = production_rate_check_langevin(&spec, &laws, &times)?;
        out.check(Check::at_most("production rate (gaussian langevin)", trace.max_residual(), 1e-5, "max |dR/ds − RHS|"));
        out.tables.push(trace_table("production_rate_langevin", &trace));
        Ok(())
    });
    out
}

/// `det Γ(s) e^{Tr(M⁻¹)s} = 1` on `[0, 2]` for `n ∈ {1, 2}`.
pub fn determinant_identity() -> Outcome {
    let mut out = Outcome::default();
    for n in [1usize, 2] {
        let name = format!("determinant identity (n = {n})");
        guarded(&mut out, &name, |out| {
            let pot = QuadraticPotential::new(n, Schedule::ramp(1.0, 2.0, 2.0));
            let mass = Mat::from_diagonal(&Vector::from_iterator(n, (0..n).map(|i| 1.0 + i as f64)));
            let spec = LangevinSpec::with_mass(n, Arc::new(pot), mass, 1.0, 1.0, 2.0)?;
            let fm = langevin_propagator(&spec, &uniform_times(2.0, 200), 1e-3)?;
            out.check(Check::at_most(name.clone(), fm.det_identity_residual(), 1e-8, "max over s ∈ [0, 2]"));
            Ok(())
        });
    }
    out
}

/// Homogeneous quadratic Langevin on the kinetic grid: `R` must not increase.
pub fn kinetic_monotonicity(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    guarded(&mut out, "kinetic monotonicity", |out| {
        let m = &cfg.model;
        let pot = QuadraticPotential::new(1, Schedule::Constant(m.stiffness_start));
        let spec = LangevinSpec::new(1, Arc::new(pot), m.friction, m.beta, m.horizon)?;
        let (qa, pa) = phase_space_axes(&spec, 0.0, cfg.grid.q_cells, cfg.grid.p_cells);
        let init = GridDensity::from_log_fn(vec![qa, pa], 0.0, |z| {
            -(z[0] - 1.0) * (z[0] - 1.0) / 0.5 - (z[1] + 0.5) * (z[1] + 0.5) / 1.5
        })?
        .normalized();
        let d = solve_kinetic_fp_2d(&spec, &init, &uniform_times(m.horizon, 50), &FpConfig::new(cfg.grid.dt))?;
        let trace = production_rate_check_langevin_grid(&spec, &d)?;
        out.check(Check::at_most("kinetic monotonicity", trace.max_derivative(), 1e-6, "max dR/ds on the (q, p) grid"));
        out.tables.push(trace_table("kinetic_monotonicity", &trace));
        Ok(())
    });
    out
}

pub fn bound_theorem1(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    guarded(&mut out, "brownian bound", |out| {
        let spec = tanh_spec(cfg)?;
        let amp = tanh_amplitude(cfg);
        let axis = gibbs_axis(&spec, 0.0, cfg.grid.cells);
        let init = GridDensity::from_log_fn(vec![axis], 0.0, |x| -(x[0] - 0.5) * (x[0] - 0.5) / 2.0)?.normalized();
        let times = uniform_times(spec.horizon, 100);
        let d = solve_fp_1d(&spec, &init, &times, &FpConfig::new(cfg.grid.dt).crank_nicolson())?;
        let r = d
            .iter()
            .map(|x| relative_entropy_grid(x, &spec.gibbs_grid(x.time, vec![axis])?))
            .collect::<Res<Vec<_>>>()?;
        // ∂V/∂s = a'(s) tanh x: sup-norm and Lipschitz constant are both |a'(s)|
        let a = amp.clone();
        let profile = move |s: f64| a.derivative(s).abs();
        let beta = spec.beta;
        let a = amp.clone();
        let kappa = move |s: f64| beta * (1.0 - 4.0 / (3.0 * 3f64.sqrt()) * a.value(s).abs());
        let b1 = theorem1_bound(DriftBound::Bounded, &profile, &kappa, spec.gamma_lower, beta, r[0], &times)?;
        let b2 = theorem1_bound(DriftBound::Lipschitz, &profile, &kappa, spec.gamma_lower, beta, r[0], &times)?;
        let excess = |b: &[f64]| r.iter().zip(b).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max);
        out.check(Check::at_most("bound (bounded drift)", excess(&b1), 0.0, "max of R(s) − bound"));
        out.check(Check::at_most("bound (lipschitz drift)", excess(&b2), 0.0, "max of R(s) − bound"));
        let probes: Vec<Vec<f64>> = (0..=4000).map(|i| vec![-5.0 + i as f64 * 2.5e-3]).collect();
        let mut worst: f64 = 0.0;
        for &s in &[0.25, 0.5, 0.75] {
            let numeric = bakry_emery_kappa(spec.potential.as_ref(), 1, beta, s * spec.horizon, &probes)?;
            worst = worst.max((numeric - kappa(s * spec.horizon)).abs());
        }
        out.check(Check::at_most("bakry-emery constant", worst, 1e-4, "probe minimum vs closed form"));
        let mut t = Table::new("theorem1", &["s", "relative_entropy", "bound_bounded", "bound_lipschitz"]);
        for k in 0..times.len() {
            t.push(vec![times[k], r[k], b1[k], b2[k]]);
        }
        out.tables.push(t);
        Ok(())
    });
    out
}

pub fn bound_theorem3(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    guarded(&mut out, "langevin bound", |out| {
        let m = &cfg.model;
        let k = m.stiffness_start;
        let horizon = 10.0;
        let pot = QuadraticPotential::new(1, Schedule::Constant(k));
        let spec = LangevinSpec::new(1, Arc::new(pot), m.friction, m.beta, horizon)?;
        // Hessian bound L = k; the position marginal has LSI constant βk
        let cert = optimize_omega(m.friction, m.beta, k, m.beta * k)?;
        let times = uniform_times(horizon, 1000);
        let fm = langevin_propagator(&spec, &times, 1e-3)?;
        let init = GaussianLaw::new(Vector::from_vec(vec![1.5, -1.0]), Mat::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 2.0]))?;
        let gibbs = spec.gibbs_gaussian(0.0)?;
        let e = (0..times.len())
            .map(|i| gaussian_modified_functional(&fm.pushforward(&init, i)?, &gibbs, cert.a, cert.b, cert.c))
            .collect::<Res<Vec<_>>>()?;
        let bound = theorem3_bound(&cert, e[0], &times)?;
        let ratio = e.iter().zip(&bound).map(|(x, b)| x / b).fold(f64::NEG_INFINITY, f64::max);
        out.check(Check::at_most("exponential decay", ratio, 1.0 + 1e-6, "max of E(s) / (E(0)e^{−ωs})"));
        out.scalar("omega", cert.omega);
        out.merge(certificate_scalars(&cert));
        let mut t = Table::new("theorem3", &["s", "modified_functional", "bound"]);
        for i in 0..times.len() {
            t.push(vec![times[i], e[i], bound[i]]);
        }
        out.tables.push(t);

        let forced = cert.with_drift_bounds(0.05, 0.02)?;
        let closed = theorem3_bound(&forced, e[0], &times)?;
        let (l1, l2, kap) = (|_s: f64| 0.05, |_s: f64| 0.02, move |_s: f64| forced.kappa);
        let conv = theorem3_bound_time_dependent(&forced, &l1, &l2, &kap, e[0], &times)?;
        let asym = forced.asymptote();
        let mut worst: f64 = 0.0;
        let mut dominated = true;
        for (i, &s) in times.iter().enumerate() {
            let decay = (-forced.omega * s).exp();
            worst = worst.max((conv[i] - (e[0] * decay + asym * (1.0 - decay))).abs());
            dominated &= conv[i] <= closed[i] + 1e-12;
        }
        out.check(Check::at_most("convolution bound consistency", worst, 1e-8, "constant profiles vs closed form"));
        out.check(Check::flag("convolution bound below constant bound", dominated, "pointwise on the time grid"));
        Ok(())
    });
    out
}

fn certificate_scalars(cert: &HypocoercivityCertificate) -> Outcome {
    let mut out = Outcome::default();
    for (k, v) in [
        ("a", cert.a),
        ("b", cert.b),
        ("c", cert.c),
        ("lambda_1", cert.lambda.0),
        ("lambda_2", cert.lambda.1),
        ("lambda_tilde_1", cert.lambda_tilde.0),
        ("lambda_tilde_2", cert.lambda_tilde.1),
    ] {
        out.scalar(&format!("certificate_{k}"), v);
    }
    out
}

pub fn jarzynski(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    guarded(&mut out, "vanilla jarzynski", |out| {
        let spec = stiffness_spec(cfg)?;
        let init = spec.gibbs_gaussian(0.0)?;
        let sim = SimulationConfig::new(cfg.monte_carlo.paths, cfg.monte_carlo.dt, cfg.seed);
        let ens = parallel::simulate(&BrownianSystem::forward(&spec), None, &init, &sim)?;
        let r = estimate_free_energy_vanilla(&ens, spec.beta)?;
        let exact = exact_free_energy_difference(&spec)?;
        let z = (r.delta_f - exact).abs() / r.std_error;
        out.check(Check::at_most(
            "vanilla estimate",
            z,
            3.0,
            format!("ΔF̂ = {:.6} ± {:.6}, exact {exact:.6} (value in standard errors)", r.delta_f, r.std_error),
        ));
        let mean_work = r.mean_work.unwrap_or(f64::NAN);
        out.check(Check::at_least("jensen", mean_work - r.delta_f, 0.0, "mean(W) − ΔF̂"));
        out.scalar("delta_f_hat", r.delta_f);
        out.scalar("std_error", r.std_error);
        out.scalar("delta_f_exact", exact);
        let v = variance_report(&r);
        out.scalar("coefficient_of_variation", v.coefficient_of_variation);
        out.scalar("effective_sample_size", v.effective_sample_size);
        let mut t = Table::new("jarzynski_paths", &["path", "work", "log_value"]);
        for (p, (w, l)) in ens.work.iter().zip(&r.log_values).enumerate() {
            t.push(vec![p as f64, *w, *l]);
        }
        out.tables.push(t);
        Ok(())
    });
    out
}

/// `ΔF = F(T) − F(0)` from the closed-form Gaussian partition functions.
fn exact_free_energy_difference(spec: &DiffusionSpec) -> Res<f64> {
    Ok(spec.gaussian_partition_function(spec.horizon)?.free_energy - spec.gaussian_partition_function(0.0)?.free_energy)
}

pub fn zero_variance(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    guarded(&mut out, "zero variance", |out| {
        let spec = stiffness_spec(cfg)?;
        let exact = exact_free_energy_difference(&spec)?;
        let target = EquilibriumDensity::brownian(&spec)?;
        let base = cfg.monte_carlo.dt;
        let mut t = Table::new("zero_variance", &["dt", "delta_f_hat", "std_error", "coefficient_of_variation"]);
        let mut cvs = Vec::new();
        for (i, dt) in [4.0 * base, 2.0 * base, base].into_iter().enumerate() {
            let sol = brownian_control_solution(&spec, dt)?;
            let sim = SimulationConfig::new(cfg.monte_carlo.paths, dt, cfg.seed + 200 + i as u64);
            let ens = parallel::simulate(&BrownianSystem::forward(&spec), Some(&sol.control), &sol.initial.law, &sim)?;
            let r = estimate_free_energy_is(&ens, spec.beta, &target, &sol.initial.law)?;
            let cv = variance_report(&r).coefficient_of_variation;
            t.push(vec![dt, r.delta_f, r.std_error, cv]);
            cvs.push(cv);
            if i == 2 {
                // the estimator is unbiased for the Euler chain, whose free-energy
                // difference is off by O(dt); the allowance is 3 standard errors plus dt
                out.check(Check::at_most(
                    "optimal estimate",
                    (r.delta_f - exact).abs(),
                    3.0 * r.std_error + dt,
                    format!("ΔF̂ = {:.6} ± {:.2e}, exact {exact:.6}", r.delta_f, r.std_error),
                ));
            }
        }
        out.check(Check::at_most("optimal coefficient of variation", cvs[2], 1e-2, format!("at dt = {base}")));
        out.check(Check::flag(
            "coefficient of variation decreases with dt",
            cvs[0] > cvs[1] && cvs[1] > cvs[2],
            format!("CV at dt = 4h, 2h, h: {:.5}, {:.5}, {:.5}", cvs[0], cvs[1], cvs[2]),
        ));
        if cvs[1] > 0.0 {
            out.scalar("cv_halving_ratio", cvs[1] / cvs[2]);
        }
        out.tables.push(t);
        Ok(())
    });
    guarded(&mut out, "variance reduction", |out| {
        // the harder switch: β = 4
        let m = &cfg.model;
        let pot = QuadraticPotential::new(1, Schedule::ramp(m.stiffness_start, m.stiffness_end, m.horizon));
        let spec = DiffusionSpec::new(1, Arc::new(pot), 4.0, m.horizon)?;
        let paths = cfg.monte_carlo.paths / 5;
        let sim = SimulationConfig::new(paths, cfg.monte_carlo.dt, cfg.seed + 300);
        let init = spec.gibbs_gaussian(0.0)?;
        let vanilla = estimate_free_energy_vanilla(&parallel::simulate(&BrownianSystem::forward(&spec), None, &init, &sim)?, 4.0)?;
        let sol = brownian_control_solution(&spec, cfg.monte_carlo.dt)?;
        let ens = parallel::simulate(&BrownianSystem::forward(&spec), Some(&sol.control), &sol.initial.law, &sim)?;
        let is = estimate_free_energy_is(&ens, 4.0, &EquilibriumDensity::brownian(&spec)?, &sol.initial.law)?;
        let (cv_v, cv_i) = (variance_report(&vanilla).coefficient_of_variation, variance_report(&is).coefficient_of_variation);
        out.check(Check::flag(
            "optimal estimator beats vanilla",
            cv_i < cv_v,
            format!("CV vanilla {cv_v:.4}, optimal {cv_i:.4} at β = 4"),
        ));
        Ok(())
    });
    out
}

pub fn reversal_test(cfg: &ExperimentConfig) -> Outcome {
    let mut out = drift_identities(cfg);
    out.merge(law_equivalence(cfg));
    out
}

/// Reversal of the reverse process vs the optimally controlled drift.
pub fn drift_identities(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    let probe_times = uniform_times(cfg.model.horizon, 4);
    guarded(&mut out, "drift identity (gaussian brownian)", |out| {
        let spec = stiffness_spec(cfg)?;
        let sol = brownian_control_solution(&spec, cfg.monte_carlo.dt)?;
        let rev = reversal_drift(&spec, Arc::new(GaussianReverseLaws::brownian(&spec)?));
        let ctrl = controlled_drift(Arc::new(BrownianSystem::forward(&spec)), Arc::new(sol.control));
        let probes = ProbeGrid::uniform(1, 3.0, 25, probe_times.clone());
        let r = drift_identity_check(&rev, &ctrl, &probes)?;
        out.check(Check::at_most("drift identity (gaussian brownian)", r, 1e-6, "max over probes"));
        Ok(())
    });
    guarded(&mut out, "drift identity (gaussian langevin)", |out| {
        let spec = langevin_stiffness_spec(cfg)?;
        let sol = langevin_control_solution(&spec, cfg.monte_carlo.dt)?;
        let rev = reversal_drift_langevin(&spec, Arc::new(GaussianReverseLaws::langevin(&spec)?));
        let ctrl = controlled_drift(Arc::new(LangevinSystem::forward(&spec)), Arc::new(sol.control));
        let probes = ProbeGrid::uniform(2, 3.0, 9, probe_times.clone());
        let r = drift_identity_check(&rev, &ctrl, &probes)?;
        out.check(Check::at_most("drift identity (gaussian langevin)", r, 1e-6, "max over probes"));
        Ok(())
    });
    guarded(&mut out, "drift identity (grid brownian)", |out| {
        let spec = stiffness_spec(cfg)?;
        let axis = gibbs_axis(&spec, 0.0, cfg.grid.cells);
        let fp = FpConfig::new(cfg.grid.dt).crank_nicolson();
        let d = reverse_density_grid(&spec, axis, &uniform_times(spec.horizon, 100), &fp)?;
        let rev = reversal_drift(&spec, Arc::new(GridReverseDensities::new(d)?));
        let g = solve_g_pde_1d(&spec, axis, GSolveConfig::new(cfg.grid.dt))?;
        let ctrl = controlled_drift(Arc::new(BrownianSystem::forward(&spec)), Arc::new(g.control()));
        let probes = ProbeGrid::uniform(1, 2.0, 21, probe_times.clone());
        let r = drift_identity_check(&rev, &ctrl, &probes)?;
        out.check(Check::at_most("drift identity (grid brownian)", r, GRID_DRIFT_TOLERANCE, "max over probes, |x| ≤ 2"));
        Ok(())
    });
    out
}

fn equivalence_checks(out: &mut Outcome, label: &str, r: &EquivalenceReport) {
    let max = |f: &dyn Fn(&neqdiff_core::reversal::MarginalComparison) -> f64| {
        r.comparisons.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
    };
    out.check(Check::at_most(format!("law equivalence means ({label})"), max(&|c| c.mean_z.abs()), r.z_limit, "max |z| over times and components"));
    out.check(Check::at_most(
        format!("law equivalence variances ({label})"),
        max(&|c| c.variance_z.abs()),
        r.z_limit,
        "max |z| over times and components",
    ));
    out.check(Check::at_most(
        format!("law equivalence KS ({label})"),
        max(&|c| c.ks / c.ks_critical),
        1.0 - f64::EPSILON,
        "max of KS / critical value at the 1% level",
    ));
}

fn equivalence_table(name: &str, r: &EquivalenceReport) -> Table {
    let mut t = Table::new(
        name,
        &["s", "component", "mean_reverse", "mean_controlled", "mean_z", "variance_reverse", "variance_controlled", "variance_z", "ks", "ks_critical"],
    );
    for c in &r.comparisons {
        t.push(vec![c.time, c.component as f64, c.means.0, c.means.1, c.mean_z, c.variances.0, c.variances.1, c.variance_z, c.ks, c.ks_critical]);
    }
    t
}

/// Marginals of the time-reversed reverse process vs the controlled forward process.
pub fn law_equivalence(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    let paths = cfg.monte_carlo.equivalence_paths;
    guarded(&mut out, "law equivalence (brownian)", |out| {
        let spec = stiffness_spec(cfg)?;
        let sol = ControlSolution::Quadratic(brownian_control_solution(&spec, cfg.monte_carlo.dt)?);
        let eq = EquivalenceConfig::new(paths, cfg.monte_carlo.dt, cfg.seed + 400, spec.horizon);
        let r = brownian_law_equivalence(&spec, &sol, &eq)?;
        equivalence_checks(out, "brownian", &r);
        out.tables.push(equivalence_table("equivalence_brownian", &r));
        Ok(())
    });
    guarded(&mut out, "law equivalence (langevin)", |out| {
        let spec = langevin_stiffness_spec(cfg)?;
        let sol = langevin_control_solution(&spec, cfg.monte_carlo.dt)?;
        let eq = EquivalenceConfig::new(paths, cfg.monte_carlo.dt, cfg.seed + 500, spec.horizon);
        let r = langevin_law_equivalence(&spec, &sol, &eq)?;
        equivalence_checks(out, "langevin", &r);
        out.tables.push(equivalence_table("equivalence_langevin", &r));
        Ok(())
    });
    out
}

pub fn omega_opt(cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    guarded(&mut out, "worked certificate", |out| {
        let cert = hypocoercivity_certificate(0.05, 0.04, 0.05, 1.0, 1.0, 0.0, 1.0)?;
        out.check(Check::at_most("worked certificate eigenvalue", (cert.lambda_tilde.0 - 0.02189).abs(), 1e-5, "λ̃₁ vs 0.02189"));
        out.check(Check::at_most("worked certificate rate", (cert.omega - 0.01855).abs(), 1e-5, "ω vs 0.01855"));
        Ok(())
    });
    guarded(&mut out, "optimized certificate", |out| {
        let m = &cfg.model;
        let cert = optimize_omega(m.friction, m.beta, 0.0, 1.0)?;
        let again = hypocoercivity_certificate(cert.a, cert.b, cert.c, cert.xi, cert.beta, cert.l, cert.kappa)?;
        out.check(Check::at_least("optimized rate", again.omega, 0.01855, "ω* vs the worked example"));
        out.scalar("omega", cert.omega);
        out.merge(certificate_scalars(&cert));
        Ok(())
    });
    out
}

pub fn omega_scaling(_cfg: &ExperimentConfig) -> Outcome {
    let mut out = Outcome::default();
    let mut table = Table::new("omega_scaling", &["xi", "omega"]);
    for (label, lo, target) in [("small friction", -3.0, 1.0), ("large friction", 2.0, -1.0)] {
        guarded(&mut out, &format!("omega slope ({label})"), |out| {
            let xs: Vec<f64> = (0..5).map(|i| lo + 0.25 * i as f64).collect();
            let omegas = xs
                .par_iter()
                .map(|&lx| optimize_omega(10f64.powf(lx), 1.0, 1.0, 1.0).map(|c| c.omega))
                .collect::<Res<Vec<_>>>()?;
            let ys: Vec<f64> = omegas.iter().map(|w| w.log10()).collect();
            for (x, w) in xs.iter().zip(&omegas) {
                table.push(vec![10f64.powf(*x), *w]);
            }
            let slope = least_squares_slope(&xs, &ys);
            out.scalar(&format!("slope_{}", label.replace(' ', "_")), slope);
            out.check(Check::at_most(
                format!("omega slope ({label})"),
                (slope - target).abs(),
                0.15,
                format!("fitted slope {slope:.4}, expected {target}"),
            ));
            Ok(())
        });
    }
    out.tables.push(table);
    out
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Prints the verdict lines of an outcome.
pub fn print_checks(outcome: &Outcome, prefix: impl Display) {
    for c in &outcome.checks {
        println!("{prefix}{}", c.line());
    }
}

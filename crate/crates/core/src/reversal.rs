//! Time reversal of the reverse process. Its drift is compared with the
//! optimally controlled forward drift, and its marginals with those of
//! the controlled forward ensemble.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::control::{feynman_kac_g, ControlSolution, McEstimate, QuadraticControlSolution};
use crate::error::{invalid, Error, Result};
use crate::fokker_planck::{solve_fp_1d, FpConfig};
use crate::gaussian::{default_step, GaussianLaw, LinearSde};
use crate::grid::{Axis, GridDensity};
use crate::linalg::{Mat, Vector};
use crate::math::{exp, floor, ln, sqrt};
use crate::model::{Circulation, DiffusionSpec, LangevinSpec, Noise, Potential, ProbeGrid, QuadraticForm, QuadratureConfig};
use crate::sde::{
    simulate, BrownianSystem, ControlField, GibbsRejectionSampler, GridSampler, InitialLaw, LangevinSystem, Record,
    SdeSystem, SimulationConfig,
};
use crate::stats::{ks_critical, ks_statistic, mean, std_error, variance, variance_std_error};

/// `V̂(x, s) = V(x, T − s)`.
struct MirroredPotential {
    inner: Arc<dyn Potential>,
    horizon: f64,
}

impl Potential for MirroredPotential {
    fn value(&self, x: &[f64], s: f64) -> f64 {
        self.inner.value(x, self.horizon - s)
    }
    fn time_derivative(&self, x: &[f64], s: f64) -> f64 {
        -self.inner.time_derivative(x, self.horizon - s)
    }
    fn gradient(&self, x: &[f64], s: f64, out: &mut [f64]) {
        self.inner.gradient(x, self.horizon - s, out)
    }
    fn hessian(&self, x: &[f64], s: f64, out: &mut [f64]) {
        self.inner.hessian(x, self.horizon - s, out)
    }
    fn gradient_time_derivative(&self, x: &[f64], s: f64, out: &mut [f64]) {
        self.inner.gradient_time_derivative(x, self.horizon - s, out);
        out.iter_mut().for_each(|v| *v = -*v);
    }
    fn quadratic(&self, s: f64) -> Option<QuadraticForm> {
        self.inner.quadratic(self.horizon - s).map(|q| QuadraticForm {
            stiffness_rate: -q.stiffness_rate,
            center_rate: -q.center_rate,
            offset_rate: -q.offset_rate,
            ..q
        })
    }
    fn is_time_independent(&self) -> bool {
        self.inner.is_time_independent()
    }
}

/// `Ĵ(x, s) = −J(x, T − s)`.
struct MirroredCirculation {
    inner: Arc<dyn Circulation>,
    horizon: f64,
}

impl Circulation for MirroredCirculation {
    fn value(&self, x: &[f64], s: f64, out: &mut [f64]) {
        self.inner.value(x, self.horizon - s, out);
        out.iter_mut().for_each(|v| *v = -*v);
    }
    fn divergence(&self, x: &[f64], s: f64) -> f64 {
        -self.inner.divergence(x, self.horizon - s)
    }
    fn linear(&self, s: f64) -> Option<Mat> {
        self.inner.linear(self.horizon - s).map(|m| -m)
    }
    fn is_zero(&self) -> bool {
        self.inner.is_zero()
    }
}

/// `σ̂(x, s) = σ(x, T − s)`.
struct MirroredNoise {
    inner: Arc<dyn Noise>,
    horizon: f64,
}

impl Noise for MirroredNoise {
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }
    fn sigma(&self, x: &[f64], s: f64, out: &mut [f64]) {
        self.inner.sigma(x, self.horizon - s, out)
    }
    fn gamma(&self, x: &[f64], s: f64, out: &mut [f64]) {
        self.inner.gamma(x, self.horizon - s, out)
    }
    fn divergence_gamma(&self, x: &[f64], s: f64, out: &mut [f64]) {
        self.inner.divergence_gamma(x, self.horizon - s, out)
    }
    fn constant(&self, s: f64) -> Option<Mat> {
        self.inner.constant(self.horizon - s)
    }
}

/// The reverse process written as a forward spec: coefficients at `T − s`
/// and circulation sign-flipped. Its forward dynamics are the reverse dynamics.
pub fn reverse_spec(spec: &DiffusionSpec) -> DiffusionSpec {
    let horizon = spec.horizon;
    DiffusionSpec {
        dim: spec.dim,
        potential: Arc::new(MirroredPotential { inner: spec.potential.clone(), horizon }),
        circulation: Arc::new(MirroredCirculation { inner: spec.circulation.clone(), horizon }),
        noise: Arc::new(MirroredNoise { inner: spec.noise.clone(), horizon }),
        beta: spec.beta,
        horizon,
        gamma_lower: spec.gamma_lower,
    }
}

/// `∇ ln ρᴿ(x, t)` of the reverse-process density at reverse time `t`
/// (`∇_p` only for phase-space densities).
pub trait ReverseScore: Send + Sync {
    fn score(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()>;
}

/// Gaussian laws of a linear reverse process, stored on a uniform grid and
/// propagated exactly (RK4) from the nearest stored time on demand.
#[derive(Debug, Clone)]
pub struct GaussianReverseLaws {
    pub sde: LinearSde,
    pub times: Vec<f64>,
    pub laws: Vec<GaussianLaw>,
    step: f64,
    /// Components the score is taken in (all, or the momentum block).
    components: Vec<usize>,
}

impl GaussianReverseLaws {
    fn build(sde: LinearSde, init: GaussianLaw, horizon: f64, components: Vec<usize>) -> Result<Self> {
        let step = default_step(horizon);
        let times: Vec<f64> = (0..=100).map(|k| horizon * k as f64 / 100.0).collect();
        let laws = sde.trajectory(&init, &times, step)?;
        Ok(Self { sde, times, laws, step, components })
    }

    /// Reverse Brownian process of a quadratic spec, started from the Gibbs law at `T`.
    pub fn brownian(spec: &DiffusionSpec) -> Result<Self> {
        let init = spec.gibbs_gaussian(spec.horizon)?;
        Self::build(LinearSde::brownian_reverse(spec)?, init, spec.horizon, (0..spec.dim).collect())
    }

    /// Reverse Langevin process of a quadratic spec, started from `π_T^∞`.
    pub fn langevin(spec: &LangevinSpec) -> Result<Self> {
        let init = spec.gibbs_gaussian(spec.horizon)?;
        let n = spec.dim;
        Self::build(LinearSde::langevin_reverse(spec)?, init, spec.horizon, (n..2 * n).collect())
    }

    /// Law of the reverse process at time `t`.
    pub fn law_at(&self, t: f64) -> Result<GaussianLaw> {
        let h = self.times[1] - self.times[0];
        let k = (floor(t / h).max(0.0) as usize).min(self.times.len() - 1);
        if (t - self.times[k]).abs() < 1e-15 {
            return Ok(self.laws[k].clone());
        }
        self.sde.propagate(&self.laws[k], self.times[k], t, self.step)
    }
}

impl ReverseScore for GaussianReverseLaws {
    fn score(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let law = self.law_at(t)?;
        let prec = law.precision()?;
        let g = -(prec * (Vector::from_column_slice(x) - &law.mean));
        for (o, &c) in out.iter_mut().zip(&self.components) {
            *o = g[c];
        }
        Ok(())
    }
}

/// Grid densities of the reverse process at increasing reverse times.
#[derive(Debug, Clone)]
pub struct GridReverseDensities {
    pub densities: Vec<GridDensity>,
    /// `∂ ln ρ` at cell centers (last axis), one row per density.
    score: Vec<Vec<f64>>,
}

impl GridReverseDensities {
    pub fn new(densities: Vec<GridDensity>) -> Result<Self> {
        if densities.len() < 2 || densities.iter().any(|d| d.dim() != 1 || d.axes != densities[0].axes) {
            return Err(invalid("need at least two one-dimensional densities on a common grid"));
        }
        let axis = densities[0].axes[0];
        let n = axis.cells;
        let h = axis.spacing();
        let mut score = Vec::with_capacity(densities.len());
        for d in &densities {
            let zeros: Vec<usize> = (0..n).filter(|&i| !(d.values[i] > 0.0)).collect();
            if !zeros.is_empty() {
                return Err(Error::ZeroInterior { cells: zeros });
            }
            let l: Vec<f64> = d.values.iter().map(|v| ln(*v)).collect();
            score.push(
                (0..n)
                    .map(|i| match i {
                        0 => (l[1] - l[0]) / h,
                        _ if i == n - 1 => (l[n - 1] - l[n - 2]) / h,
                        _ => (l[i + 1] - l[i - 1]) / (2.0 * h),
                    })
                    .collect(),
            );
        }
        Ok(Self { densities, score })
    }
}

impl ReverseScore for GridReverseDensities {
    fn score(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let axis = self.densities[0].axes[0];
        let pos = ((x[0] - axis.min) / axis.spacing() - 0.5).clamp(0.0, (axis.cells - 1) as f64);
        let i = (floor(pos) as usize).min(axis.cells - 2);
        let w = pos - i as f64;
        let times: Vec<f64> = self.densities.iter().map(|d| d.time).collect();
        let k = times.partition_point(|&v| v <= t).clamp(1, times.len() - 1) - 1;
        let v = ((t - times[k]) / (times[k + 1] - times[k])).clamp(0.0, 1.0);
        let at = |row: &[f64]| (1.0 - w) * row[i] + w * row[i + 1];
        out[0] = (1.0 - v) * at(&self.score[k]) + v * at(&self.score[k + 1]);
        Ok(())
    }
}

/// What a drift field describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftOrigin {
    Forward,
    Reverse,
    ReversalOfReverse,
    ControlledOptimal,
}

type DriftFn = dyn Fn(&[f64], f64, &mut [f64]) -> Result<()> + Send + Sync;

/// A drift `b(x, s)` in forward time.
#[derive(Clone)]
pub struct DriftField {
    pub dim: usize,
    pub origin: DriftOrigin,
    eval: Arc<DriftFn>,
}

impl core::fmt::Debug for DriftField {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("DriftField").field("dim", &self.dim).field("origin", &self.origin).finish()
    }
}

impl DriftField {
    pub fn new(
        dim: usize,
        origin: DriftOrigin,
        eval: impl Fn(&[f64], f64, &mut [f64]) -> Result<()> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, origin, eval: Arc::new(eval) }
    }

    pub fn evaluate(&self, x: &[f64], s: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        (self.eval)(x, s, &mut out)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluator { point: x.to_vec(), time: s, what: String::from("non-finite drift") });
        }
        Ok(out)
    }
}

/// Drift of the time-reversed reverse process at forward time `s`:
/// `(J − γ∇V + β⁻¹∇·γ)(x, s) + (2/β)γ∇ln(e^{βV(x, s)}ρᴿ(x, T − s))`.
pub fn reversal_drift(spec: &DiffusionSpec, density: Arc<dyn ReverseScore>) -> DriftField {
    let spec = spec.clone();
    let n = spec.dim;
    DriftField::new(n, DriftOrigin::ReversalOfReverse, move |x, s, out| {
        spec.drift(x, s, out);
        let mut grad = vec![0.0; n];
        let mut score = vec![0.0; n];
        let mut gamma = vec![0.0; n * n];
        spec.potential.gradient(x, s, &mut grad);
        density.score(x, spec.horizon - s, &mut score)?;
        spec.noise.gamma(x, s, &mut gamma);
        for i in 0..n {
            out[i] += (2.0 / spec.beta)
                * (0..n).map(|j| gamma[i * n + j] * (spec.beta * grad[j] + score[j])).sum::<f64>();
        }
        Ok(())
    })
}

/// Phase-space analogue: `q' = M⁻¹p`,
/// `p' = −∇V − ξM⁻¹p + (2ξ/β)∇_p ln(e^{βH}ϱᴿ(·, T − s))`.
pub fn reversal_drift_langevin(spec: &LangevinSpec, density: Arc<dyn ReverseScore>) -> DriftField {
    let spec = spec.clone();
    let n = spec.dim;
    DriftField::new(2 * n, DriftOrigin::ReversalOfReverse, move |z, s, out| {
        spec.drift(z, s, out);
        let mut score = vec![0.0; n];
        density.score(z, spec.horizon - s, &mut score)?;
        let mut v = vec![0.0; n];
        spec.velocity(&z[n..], &mut v);
        for i in 0..n {
            out[n + i] += 2.0 * spec.friction / spec.beta * (spec.beta * v[i] + score[i]);
        }
        Ok(())
    })
}

/// `b + σu*` of a system driven by a feedback control.
pub fn controlled_drift(system: Arc<dyn SdeSystem>, control: Arc<dyn ControlField>) -> DriftField {
    let d = system.state_dim();
    let m = system.noise_dim();
    DriftField::new(d, DriftOrigin::ControlledOptimal, move |x, s, out| {
        system.drift(x, s, out);
        let mut sig = vec![0.0; d * m];
        let mut u = vec![0.0; m];
        system.sigma(x, s, &mut sig);
        control.value(x, s, &mut u);
        for i in 0..d {
            out[i] += (0..m).map(|j| sig[i * m + j] * u[j]).sum::<f64>();
        }
        Ok(())
    })
}

/// Largest componentwise `|a − b|` over the probe points and times.
pub fn drift_identity_check(a: &DriftField, b: &DriftField, probes: &ProbeGrid) -> Result<f64> {
    if a.dim != b.dim {
        return Err(invalid("drift fields have different dimensions"));
    }
    let mut worst: f64 = 0.0;
    for &s in &probes.times {
        for x in &probes.points {
            let (u, v) = (a.evaluate(x, s)?, b.evaluate(x, s)?);
            worst = u.iter().zip(&v).fold(worst, |w, (p, q)| w.max((p - q).abs()));
        }
    }
    Ok(worst)
}

/// Comparison of one marginal component at one matched time.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalComparison {
    /// Forward time `s`; the reverse ensemble is read at `T − s`.
    pub time: f64,
    pub component: usize,
    pub means: (f64, f64),
    pub mean_z: f64,
    pub variances: (f64, f64),
    pub variance_z: f64,
    pub ks: f64,
    pub ks_critical: f64,
}

impl MarginalComparison {
    pub fn passed(&self, z_limit: f64) -> bool {
        self.mean_z.abs() <= z_limit && self.variance_z.abs() <= z_limit && self.ks < self.ks_critical
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub comparisons: Vec<MarginalComparison>,
    /// Mean/variance threshold in combined standard errors.
    pub z_limit: f64,
    pub ks_level: f64,
    pub paths: (usize, usize),
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.comparisons.iter().all(|c| c.passed(self.z_limit))
    }

    pub fn failures(&self) -> Vec<String> {
        self.comparisons
            .iter()
            .filter(|c| !c.passed(self.z_limit))
            .map(|c| {
                format!(
                    "s = {}, component {}: mean z {:.2}, variance z {:.2}, KS {:.4} (critical {:.4})",
                    c.time, c.component, c.mean_z, c.variance_z, c.ks, c.ks_critical
                )
            })
            .collect()
    }
}

/// Ensemble sizes and matched times of a law-equivalence test.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Forward times `s`; the default is five equally spaced times in `[0, T]`.
    pub times: Vec<f64>,
    pub z_limit: f64,
    pub ks_level: f64,
}

impl EquivalenceConfig {
    pub fn new(paths: usize, dt: f64, seed: u64, horizon: f64) -> Self {
        Self {
            paths,
            dt,
            seed,
            times: (0..5).map(|k| horizon * k as f64 / 4.0).collect(),
            z_limit: 4.0,
            ks_level: 0.01,
        }
    }
}

/// Simulates the reverse process from `reverse_init` and the controlled
/// forward process from `controlled_init`, and compares the reverse marginal
/// at `T − s` with the controlled marginal at `s`, component by component.
pub fn law_equivalence_test(
    reverse: &dyn SdeSystem,
    reverse_init: &dyn InitialLaw,
    forward: &dyn SdeSystem,
    control: &dyn ControlField,
    controlled_init: &dyn InitialLaw,
    cfg: &EquivalenceConfig,
) -> Result<EquivalenceReport> {
    let horizon = forward.horizon();
    let steps = floor(horizon / cfg.dt + 0.5) as usize;
    let step_of = |t: f64| floor(t / cfg.dt + 0.5) as usize;
    let fwd_steps: Vec<usize> = cfg.times.iter().map(|&s| step_of(s)).collect();
    let rev_steps: Vec<usize> = fwd_steps.iter().map(|&k| steps - k).collect();
    let rev_cfg = SimulationConfig::new(cfg.paths, cfg.dt, cfg.seed).with_record(Record::Steps(rev_steps.clone()));
    // an independent stream family for the second ensemble
    let fwd_cfg = SimulationConfig::new(cfg.paths, cfg.dt, cfg.seed ^ 0x9e37_79b9_7f4a_7c15)
        .with_record(Record::Steps(fwd_steps.clone()));
    let rev = simulate(reverse, None, reverse_init, &rev_cfg)?;
    let fwd = simulate(forward, Some(control), controlled_init, &fwd_cfg)?;
    let mut comparisons = Vec::new();
    for (k, &s) in cfg.times.iter().enumerate() {
        let rev_slot = rev.steps.iter().position(|&x| x == rev_steps[k]).expect("recorded");
        let fwd_slot = fwd.steps.iter().position(|&x| x == fwd_steps[k]).expect("recorded");
        for c in 0..forward.state_dim() {
            let a = rev.component(rev_slot, c);
            let b = fwd.component(fwd_slot, c);
            let mean_se = sqrt(std_error(&a) * std_error(&a) + std_error(&b) * std_error(&b));
            let (vsa, vsb) = (variance_std_error(&a), variance_std_error(&b));
            let var_se = sqrt(vsa * vsa + vsb * vsb);
            let (ma, mb, va, vb) = (mean(&a), mean(&b), variance(&a), variance(&b));
            comparisons.push(MarginalComparison {
                time: s,
                component: c,
                means: (ma, mb),
                mean_z: if mean_se > 0.0 { (ma - mb) / mean_se } else { 0.0 },
                variances: (va, vb),
                variance_z: if var_se > 0.0 { (va - vb) / var_se } else { 0.0 },
                ks: ks_statistic(&a, &b),
                ks_critical: ks_critical(cfg.ks_level, a.len(), b.len()),
            });
        }
    }
    Ok(EquivalenceReport { comparisons, z_limit: cfg.z_limit, ks_level: cfg.ks_level, paths: (rev.len(), fwd.len()) })
}

/// Exact sampler of the Gibbs law at time `s`: Gaussian for quadratic
/// potentials, rejection from a widened Gaussian envelope otherwise.
pub fn gibbs_sampler(spec: &DiffusionSpec, s: f64) -> Result<Box<dyn InitialLaw>> {
    if spec.potential.quadratic(s).is_some() {
        return Ok(Box::new(spec.gibbs_gaussian(s)?));
    }
    let env = QuadratureConfig::gaussian_envelope(spec.potential.as_ref(), spec.dim, spec.beta, s);
    let std = env.half_width / 8.0;
    let proposal = GaussianLaw::new(Vector::from_vec(env.center.clone()), Mat::identity(spec.dim, spec.dim) * (4.0 * std * std))?;
    let probes = ProbeGrid::uniform(spec.dim, env.half_width, if spec.dim == 1 { 2001 } else { 201 }, vec![s]);
    let probes: Vec<Vec<f64>> = probes
        .points
        .into_iter()
        .map(|p| p.iter().zip(&env.center).map(|(a, c)| a + c).collect())
        .collect();
    Ok(Box::new(GibbsRejectionSampler::with_probe_bound(spec.potential.clone(), spec.beta, s, proposal, &probes)?))
}

/// Brownian law-equivalence test for a solved control problem.
pub fn brownian_law_equivalence(spec: &DiffusionSpec, solution: &ControlSolution, cfg: &EquivalenceConfig) -> Result<EquivalenceReport> {
    let reverse_init = gibbs_sampler(spec, spec.horizon)?;
    let forward = BrownianSystem::forward(spec);
    let reverse = BrownianSystem::reverse(spec);
    match solution {
        ControlSolution::Grid(g) => {
            let init = GridSampler::new(g.initial.clone());
            law_equivalence_test(&reverse, reverse_init.as_ref(), &forward, &g.control(), &init, cfg)
        }
        ControlSolution::Quadratic(q) => {
            law_equivalence_test(&reverse, reverse_init.as_ref(), &forward, &q.control, &q.initial.law, cfg)
        }
    }
}

/// Langevin law-equivalence test for a quadratic spec.
pub fn langevin_law_equivalence(
    spec: &LangevinSpec,
    solution: &QuadraticControlSolution,
    cfg: &EquivalenceConfig,
) -> Result<EquivalenceReport> {
    let reverse_init = spec.gibbs_gaussian(spec.horizon)?;
    law_equivalence_test(
        &LangevinSystem::reverse(spec),
        &reverse_init,
        &LangevinSystem::forward(spec),
        &solution.control,
        &solution.initial.law,
        cfg,
    )
}

/// Reverse-process densities on a grid at the given reverse times, by the
/// Fokker-Planck solver on the time-mirrored spec from the Gibbs law at `T`.
pub fn reverse_density_grid(spec: &DiffusionSpec, axis: Axis, times: &[f64], cfg: &FpConfig) -> Result<Vec<GridDensity>> {
    let start = spec.gibbs_grid(spec.horizon, vec![axis])?;
    let start = GridDensity { time: 0.0, ..start };
    solve_fp_1d(&reverse_spec(spec), &start, times, cfg)
}

/// Pointwise `ρᴿ(x, t) = e^{−βV(x, T − t)} g(x, T − t) / Z(T)` with `g` by
/// Feynman-Kac over forward paths.
pub fn reverse_density_feynman_kac(
    spec: &DiffusionSpec,
    x: &[f64],
    t: f64,
    paths: usize,
    dt: f64,
    seed: u64,
) -> Result<McEstimate> {
    let s = spec.horizon - t;
    let g = feynman_kac_g(&BrownianSystem::forward(spec), x, s, paths, dt, seed)?;
    let z_t = spec.partition_function(spec.horizon, &spec.default_quadrature(spec.horizon))?.normalizer;
    let factor = exp(-spec.beta * spec.potential.value(x, s)) / z_t;
    Ok(McEstimate { value: factor * g.value, std_error: factor * g.std_error, paths: g.paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{brownian_control_solution, langevin_control_solution};
    use crate::gaussian::ou_moments;
    use crate::model::{QuadraticPotential, Schedule};

    fn ramp_spec() -> DiffusionSpec {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(1, Schedule::ramp(1.0, 2.0, 1.0)));
        DiffusionSpec::new(1, pot, 1.0, 1.0).unwrap()
    }

    #[test]
    fn stationary_reversal_is_the_same_process() {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(1, Schedule::Constant(1.5)));
        let spec = DiffusionSpec::new(1, pot, 1.0, 1.0).unwrap();
        let rev = reversal_drift(&spec, Arc::new(GaussianReverseLaws::brownian(&spec).unwrap()));
        let fwd_spec = spec.clone();
        let fwd = DriftField::new(1, DriftOrigin::Forward, move |x, s, out| {
            fwd_spec.drift(x, s, out);
            Ok(())
        });
        let probes = ProbeGrid::uniform(1, 2.0, 9, vec![0.0, 0.5, 1.0]);
        assert!(drift_identity_check(&rev, &fwd, &probes).unwrap() < 1e-12);
    }

    #[test]
    fn gaussian_reversal_matches_controlled_drift() {
        let spec = ramp_spec();
        let sol = brownian_control_solution(&spec, 1e-3).unwrap();
        let rev = reversal_drift(&spec, Arc::new(GaussianReverseLaws::brownian(&spec).unwrap()));
        let ctrl = controlled_drift(Arc::new(BrownianSystem::forward(&spec)), Arc::new(sol.control.clone()));
        let probes = ProbeGrid::uniform(1, 2.0, 9, vec![0.0, 0.3, 0.6, 0.9]);
        let r = drift_identity_check(&rev, &ctrl, &probes).unwrap();
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn langevin_reversal_matches_controlled_drift() {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(1, Schedule::ramp(1.0, 2.0, 1.0)));
        let spec = LangevinSpec::new(1, pot, 1.0, 1.0, 1.0).unwrap();
        let sol = langevin_control_solution(&spec, 1e-3).unwrap();
        let rev = reversal_drift_langevin(&spec, Arc::new(GaussianReverseLaws::langevin(&spec).unwrap()));
        let ctrl = controlled_drift(Arc::new(LangevinSystem::forward(&spec)), Arc::new(sol.control.clone()));
        let probes = ProbeGrid::uniform(2, 2.0, 5, vec![0.0, 0.5, 0.9]);
        let r = drift_identity_check(&rev, &ctrl, &probes).unwrap();
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn mirrored_spec_moments_match_the_reverse_flow() {
        let spec = ramp_spec();
        let flow = GaussianReverseLaws::brownian(&spec).unwrap();
        let direct = ou_moments(&reverse_spec(&spec), &spec.gibbs_gaussian(1.0).unwrap(), 0.7).unwrap();
        let law = flow.law_at(0.7).unwrap();
        assert!((law.mean[0] - direct.mean[0]).abs() < 1e-12);
        assert!((law.cov[(0, 0)] - direct.cov[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn reverse_density_ends_at_the_optimal_initial_law() {
        let spec = ramp_spec();
        let sol = brownian_control_solution(&spec, 1e-3).unwrap();
        let flow = GaussianReverseLaws::brownian(&spec).unwrap();
        let end = flow.law_at(1.0).unwrap();
        assert!((end.mean[0] - sol.initial.law.mean[0]).abs() < 1e-8);
        assert!((end.cov[(0, 0)] - sol.initial.law.cov[(0, 0)]).abs() < 1e-8);
    }
}

//! Euler-Maruyama (and BAOAB) path simulation of the forward, reverse and
//! controlled Brownian and Langevin processes, with work and Girsanov
//! log-weight accumulation.
//!
//! Every path draws from its own ChaCha8 stream `(seed, path index)`, so an
//! ensemble is the same whether paths run serially or in parallel.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::gaussian::{GaussianLaw, QuadraticValueFunction};
use crate::grid::GridDensity;
use crate::linalg::Mat;
use crate::math::{exp, ln, sqrt};
use crate::model::{DiffusionSpec, LangevinSpec, Potential};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

/// `dx = b(x, s) ds + √(2/β) σ(x, s) dw`; a control `u` adds `σu` to the drift.
pub trait SdeSystem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn beta(&self) -> f64;
    fn horizon(&self) -> f64;
    fn drift(&self, x: &[f64], s: f64, out: &mut [f64]);
    /// Row-major `state_dim × noise_dim`.
    fn sigma(&self, x: &[f64], s: f64, out: &mut [f64]);
    /// Rate of the work: `∂V/∂s` along the protocol the process follows.
    fn work_rate(&self, x: &[f64], s: f64) -> f64;
    fn is_time_independent(&self) -> bool;
    fn as_langevin(&self) -> Option<&LangevinSystem> {
        None
    }
}

/// Brownian forward or reverse process of a [`DiffusionSpec`].
#[derive(Debug, Clone)]
pub struct BrownianSystem {
    pub spec: DiffusionSpec,
    pub direction: Direction,
}

impl BrownianSystem {
    pub fn forward(spec: &DiffusionSpec) -> Self {
        Self { spec: spec.clone(), direction: Direction::Forward }
    }

    pub fn reverse(spec: &DiffusionSpec) -> Self {
        Self { spec: spec.clone(), direction: Direction::Reverse }
    }

    fn coefficient_time(&self, s: f64) -> f64 {
        match self.direction {
            Direction::Forward => s,
            Direction::Reverse => self.spec.horizon - s,
        }
    }
}

impl SdeSystem for BrownianSystem {
    fn state_dim(&self) -> usize {
        self.spec.dim
    }
    fn noise_dim(&self) -> usize {
        self.spec.noise_dim()
    }
    fn beta(&self) -> f64 {
        self.spec.beta
    }
    fn horizon(&self) -> f64 {
        self.spec.horizon
    }
    fn drift(&self, x: &[f64], s: f64, out: &mut [f64]) {
        match self.direction {
            Direction::Forward => self.spec.drift(x, s, out),
            Direction::Reverse => self.spec.reverse_drift(x, s, out),
        }
    }
    fn sigma(&self, x: &[f64], s: f64, out: &mut [f64]) {
        self.spec.noise.sigma(x, self.coefficient_time(s), out)
    }
    fn work_rate(&self, x: &[f64], s: f64) -> f64 {
        match self.direction {
            Direction::Forward => self.spec.potential.time_derivative(x, s),
            Direction::Reverse => -self.spec.potential.time_derivative(x, self.spec.horizon - s),
        }
    }
    fn is_time_independent(&self) -> bool {
        self.spec.is_time_independent()
    }
}

/// Langevin forward or reverse process of a [`LangevinSpec`] on `z = (q, p)`.
#[derive(Debug, Clone)]
pub struct LangevinSystem {
    pub spec: LangevinSpec,
    pub direction: Direction,
}

impl LangevinSystem {
    pub fn forward(spec: &LangevinSpec) -> Self {
        Self { spec: spec.clone(), direction: Direction::Forward }
    }

    pub fn reverse(spec: &LangevinSpec) -> Self {
        Self { spec: spec.clone(), direction: Direction::Reverse }
    }
}

impl SdeSystem for LangevinSystem {
    fn state_dim(&self) -> usize {
        2 * self.spec.dim
    }
    fn noise_dim(&self) -> usize {
        self.spec.dim
    }
    fn beta(&self) -> f64 {
        self.spec.beta
    }
    fn horizon(&self) -> f64 {
        self.spec.horizon
    }
    fn drift(&self, z: &[f64], s: f64, out: &mut [f64]) {
        match self.direction {
            Direction::Forward => self.spec.drift(z, s, out),
            Direction::Reverse => self.spec.reverse_drift(z, s, out),
        }
    }
    fn sigma(&self, _z: &[f64], _s: f64, out: &mut [f64]) {
        let n = self.spec.dim;
        let r = sqrt(self.spec.friction);
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            out[(n + i) * n + i] = r;
        }
    }
    fn work_rate(&self, z: &[f64], s: f64) -> f64 {
        let q = &z[..self.spec.dim];
        match self.direction {
            Direction::Forward => self.spec.potential.time_derivative(q, s),
            Direction::Reverse => -self.spec.potential.time_derivative(q, self.spec.horizon - s),
        }
    }
    fn is_time_independent(&self) -> bool {
        self.spec.is_time_independent()
    }
    fn as_langevin(&self) -> Option<&LangevinSystem> {
        Some(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    Zero,
    Constant,
    Closure,
    GridInterpolated,
    QuadraticClosedForm,
}

/// Feedback control `u(x, s) ∈ ℝᵐ`.
pub trait ControlField: Send + Sync {
    fn noise_dim(&self) -> usize;
    fn value(&self, x: &[f64], s: f64, out: &mut [f64]);
    fn kind(&self) -> ControlKind;
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroControl(pub usize);

impl ControlField for ZeroControl {
    fn noise_dim(&self) -> usize {
        self.0
    }
    fn value(&self, _x: &[f64], _s: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    fn kind(&self) -> ControlKind {
        ControlKind::Zero
    }
}

#[derive(Debug, Clone)]
pub struct ConstantControl(pub Vec<f64>);

impl ControlField for ConstantControl {
    fn noise_dim(&self) -> usize {
        self.0.len()
    }
    fn value(&self, _x: &[f64], _s: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
    fn kind(&self) -> ControlKind {
        ControlKind::Constant
    }
}

type ControlFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;

#[derive(Clone)]
pub struct FnControl {
    pub noise_dim: usize,
    pub f: Arc<ControlFn>,
}

impl FnControl {
    pub fn new(noise_dim: usize, f: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self { noise_dim, f: Arc::new(f) }
    }
}

impl ControlField for FnControl {
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    fn value(&self, x: &[f64], s: f64, out: &mut [f64]) {
        (self.f)(x, s, out)
    }
    fn kind(&self) -> ControlKind {
        ControlKind::Closure
    }
}

/// `u*(z, s) = −2σᵀ∇U(z, s)` for a quadratic value function and constant `σ`.
#[derive(Debug, Clone)]
pub struct QuadraticControl {
    pub value: QuadraticValueFunction,
    /// Full-state noise matrix `σ` (`d × m`).
    pub sigma: Mat,
}

impl QuadraticControl {
    pub fn brownian(spec: &DiffusionSpec, value: QuadraticValueFunction) -> Result<Self> {
        let sigma = spec
            .noise
            .constant(0.0)
            .ok_or_else(|| Error::Unsupported(String::from("closed-form control needs constant noise")))?;
        Ok(Self { value, sigma })
    }

    pub fn langevin(spec: &LangevinSpec, value: QuadraticValueFunction) -> Self {
        let n = spec.dim;
        let mut sigma = Mat::zeros(2 * n, n);
        for i in 0..n {
            sigma[(n + i, i)] = sqrt(spec.friction);
        }
        Self { value, sigma }
    }
}

impl ControlField for QuadraticControl {
    fn noise_dim(&self) -> usize {
        self.sigma.ncols()
    }
    fn value(&self, x: &[f64], s: f64, out: &mut [f64]) {
        let g = self.value.gradient(x, s);
        for (j, o) in out.iter_mut().enumerate() {
            *o = -2.0 * (0..g.len()).map(|i| self.sigma[(i, j)] * g[i]).sum::<f64>();
        }
    }
    fn kind(&self) -> ControlKind {
        ControlKind::QuadraticClosedForm
    }
}

/// A law the initial states are drawn from.
pub trait InitialLaw: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) -> Result<()>;
    /// Log-density, when the law has one.
    fn log_density(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct PointMass(pub Vec<f64>);

impl InitialLaw for PointMass {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn sample(&self, _rng: &mut ChaCha8Rng, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.0);
        Ok(())
    }
}

impl InitialLaw for GaussianLaw {
    fn dim(&self) -> usize {
        GaussianLaw::dim(self)
    }
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) -> Result<()> {
        GaussianLaw::sample(self, rng, out);
        Ok(())
    }
    fn log_density(&self, x: &[f64]) -> Option<f64> {
        GaussianLaw::log_density(self, x).ok()
    }
}

/// Piecewise-constant density of a grid: pick a cell by mass, then a uniform
/// point inside it.
#[derive(Debug, Clone)]
pub struct GridSampler {
    pub density: GridDensity,
    cumulative: Vec<f64>,
}

impl GridSampler {
    pub fn new(density: GridDensity) -> Self {
        let density = density.normalized();
        let cumulative = density.cumulative();
        Self { density, cumulative }
    }

    fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut k = 0;
        for (d, a) in self.density.axes.iter().enumerate() {
            let t = (x[d] - a.min) / a.spacing();
            if !(0.0..a.cells as f64).contains(&t) {
                return None;
            }
            k = k * a.cells + t as usize;
        }
        Some(k)
    }
}

impl InitialLaw for GridSampler {
    fn dim(&self) -> usize {
        self.density.dim()
    }
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) -> Result<()> {
        let u: f64 = rng.random();
        let k = self.cumulative.partition_point(|&c| c < u).min(self.cumulative.len() - 1);
        let mut rest = k;
        for d in (0..self.density.dim()).rev() {
            let a = &self.density.axes[d];
            let i = rest % a.cells;
            rest /= a.cells;
            let jitter: f64 = rng.random();
            out[d] = a.min + (i as f64 + jitter) * a.spacing();
        }
        Ok(())
    }
    fn log_density(&self, x: &[f64]) -> Option<f64> {
        let v = self.density.values[self.cell_of(x)?];
        Some(ln(v))
    }
}

/// Exact rejection sampler for `∝ e^{−βV(·, s)}` with a Gaussian proposal `q`,
/// given `log_bound ≥ sup (−βV − ln q)`.
#[derive(Clone)]
pub struct GibbsRejectionSampler {
    pub potential: Arc<dyn Potential>,
    pub beta: f64,
    pub time: f64,
    pub proposal: GaussianLaw,
    pub log_bound: f64,
}

impl GibbsRejectionSampler {
    /// Bound estimated as the maximum over `probes` plus a safety margin of `ln 2`.
    pub fn with_probe_bound(
        potential: Arc<dyn Potential>,
        beta: f64,
        time: f64,
        proposal: GaussianLaw,
        probes: &[Vec<f64>],
    ) -> Result<Self> {
        let mut m = f64::NEG_INFINITY;
        for x in probes {
            m = m.max(-beta * potential.value(x, time) - proposal.log_density(x)?);
        }
        if !m.is_finite() {
            return Err(invalid("rejection bound is not finite"));
        }
        Ok(Self { potential, beta, time, proposal, log_bound: m + ln(2.0) })
    }
}

impl InitialLaw for GibbsRejectionSampler {
    fn dim(&self) -> usize {
        self.proposal.dim()
    }
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) -> Result<()> {
        for _ in 0..100_000 {
            self.proposal.sample(rng, out);
            let log_ratio = -self.beta * self.potential.value(out, self.time) - self.proposal.log_density(out)? - self.log_bound;
            if log_ratio > 0.0 {
                return Err(invalid("rejection bound exceeded; enlarge the probe set"));
            }
            let u: f64 = rng.random();
            if u < exp(log_ratio) {
                return Ok(());
            }
        }
        Err(invalid("rejection sampler did not accept within 100000 proposals"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    /// Initial and terminal states.
    Terminal,
    /// Every `k`-th step (plus the initial and terminal states).
    Every(usize),
    /// The listed step indices.
    Steps(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    EulerMaruyama,
    /// BAOAB splitting; uncontrolled Langevin systems with diagonal mass only.
    Baoab,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub start_time: f64,
    /// Defaults to the horizon of the system.
    pub end_time: Option<f64>,
    pub record: Record,
    pub integrator: Integrator,
}

impl SimulationConfig {
    pub fn new(paths: usize, dt: f64, seed: u64) -> Self {
        Self {
            paths,
            dt,
            seed,
            start_time: 0.0,
            end_time: None,
            record: Record::Terminal,
            integrator: Integrator::EulerMaruyama,
        }
    }

    pub fn with_record(mut self, record: Record) -> Self {
        self.record = record;
        self
    }

    pub fn with_interval(mut self, start: f64, end: f64) -> Self {
        self.start_time = start;
        self.end_time = Some(end);
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }
}

/// One simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub index: usize,
    pub initial: Vec<f64>,
    /// Recorded states, concatenated.
    pub states: Vec<f64>,
    pub work: f64,
    pub log_weight: f64,
    pub finite: bool,
}

/// Paths that stayed finite; flagged paths are listed by index and excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub dim: usize,
    pub dt: f64,
    pub seed: u64,
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    pub path_index: Vec<usize>,
    pub initial: Vec<f64>,
    pub states: Vec<f64>,
    pub work: Vec<f64>,
    pub log_weight: Vec<f64>,
    pub flagged: Vec<usize>,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.work.len()
    }

    pub fn is_empty(&self) -> bool {
        self.work.is_empty()
    }

    pub fn initial_state(&self, path: usize) -> &[f64] {
        &self.initial[path * self.dim..(path + 1) * self.dim]
    }

    /// State of `path` at recorded slot `slot`.
    pub fn state(&self, path: usize, slot: usize) -> &[f64] {
        let r = self.times.len();
        let o = (path * r + slot) * self.dim;
        &self.states[o..o + self.dim]
    }

    /// Component `component` of all paths at slot `slot`.
    pub fn component(&self, slot: usize, component: usize) -> Vec<f64> {
        (0..self.len()).map(|p| self.state(p, slot)[component]).collect()
    }

    pub fn terminal_component(&self, component: usize) -> Vec<f64> {
        self.component(self.times.len() - 1, component)
    }

    /// Slot whose recorded time is closest to `s`.
    pub fn slot_at(&self, s: f64) -> usize {
        let mut best = 0;
        for (k, t) in self.times.iter().enumerate() {
            if (t - s).abs() < (self.times[best] - s).abs() {
                best = k;
            }
        }
        best
    }
}

/// Runs single paths of a system; [`PathSimulator::assemble`] merges them in
/// path order.
pub struct PathSimulator<'a> {
    system: &'a dyn SdeSystem,
    control: Option<&'a dyn ControlField>,
    init: &'a dyn InitialLaw,
    config: &'a SimulationConfig,
    steps: usize,
    recorded: Vec<usize>,
}

impl<'a> PathSimulator<'a> {
    pub fn new(
        system: &'a dyn SdeSystem,
        control: Option<&'a dyn ControlField>,
        init: &'a dyn InitialLaw,
        config: &'a SimulationConfig,
    ) -> Result<Self> {
        if config.paths == 0 {
            return Err(invalid("at least one path is required"));
        }
        if init.dim() != system.state_dim() {
            return Err(invalid("initial law has wrong dimension"));
        }
        if let Some(c) = control {
            if c.noise_dim() != system.noise_dim() {
                return Err(invalid("control dimension does not match the noise dimension"));
            }
        }
        let end = config.end_time.unwrap_or(system.horizon());
        let span = end - config.start_time;
        if !(config.dt > 0.0) || !(span > 0.0) {
            return Err(invalid("dt and the simulated interval must be positive"));
        }
        let steps = crate::math::floor(span / config.dt + 0.5) as usize;
        if steps == 0 || ((steps as f64) * config.dt - span).abs() > 1e-9 * span {
            return Err(invalid("dt must divide the simulated interval"));
        }
        if config.integrator == Integrator::Baoab {
            let ok = control.is_none() && system.as_langevin().is_some_and(|l| is_diagonal(&l.spec.mass));
            if !ok {
                return Err(Error::Unsupported(String::from(
                    "BAOAB needs an uncontrolled Langevin system with diagonal mass",
                )));
            }
        }
        let mut recorded: Vec<usize> = match &config.record {
            Record::Terminal => vec![0, steps],
            Record::Every(k) => (0..=steps).step_by((*k).max(1)).chain(core::iter::once(steps)).collect(),
            Record::Steps(v) => {
                if v.iter().any(|&k| k > steps) {
                    return Err(invalid("recorded step beyond the last step"));
                }
                v.clone()
            }
        };
        recorded.sort_unstable();
        recorded.dedup();
        Ok(Self { system, control, init, config, steps, recorded })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn paths(&self) -> usize {
        self.config.paths
    }

    fn rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index as u64);
        rng
    }

    /// Simulate path `index`.
    pub fn run_path(&self, index: usize) -> Result<PathRecord> {
        let sys = self.system;
        let d = sys.state_dim();
        let m = sys.noise_dim();
        let beta = sys.beta();
        let dt = self.config.dt;
        let s0 = self.config.start_time;
        let amp = sqrt(2.0 / beta);
        let sqdt = sqrt(dt);
        let girsanov = sqrt(beta / 2.0);
        let mut rng = self.rng(index);

        let mut x = vec![0.0; d];
        self.init.sample(&mut rng, &mut x)?;
        let initial = x.clone();
        let mut states = Vec::with_capacity(self.recorded.len() * d);
        let mut next_rec = 0;
        if self.recorded.first() == Some(&0) {
            states.extend_from_slice(&x);
            next_rec = 1;
        }
        let mut b = vec![0.0; d];
        let mut sig = vec![0.0; d * m];
        let mut u = vec![0.0; m];
        let mut dw = vec![0.0; m];
        let mut mid = vec![0.0; d];
        let mut work = 0.0;
        let mut log_weight = 0.0;
        let time_independent = sys.is_time_independent();
        let baoab = self.config.integrator == Integrator::Baoab;

        for k in 0..self.steps {
            let s = s0 + k as f64 * dt;
            for w in dw.iter_mut() {
                *w = sqdt * rng.sample::<f64, _>(StandardNormal);
            }
            mid.copy_from_slice(&x);
            if baoab {
                baoab_step(sys.as_langevin().expect("checked in new"), &mut x, s, dt, &dw, &mut b);
            } else {
                sys.drift(&x, s, &mut b);
                sys.sigma(&x, s, &mut sig);
                if let Some(c) = self.control {
                    c.value(&x, s, &mut u);
                    for i in 0..d {
                        b[i] += (0..m).map(|j| sig[i * m + j] * u[j]).sum::<f64>();
                    }
                    let udw: f64 = u.iter().zip(&dw).map(|(a, w)| a * w).sum();
                    let uu: f64 = u.iter().map(|a| a * a).sum();
                    log_weight += -girsanov * udw - 0.25 * beta * uu * dt;
                }
                for i in 0..d {
                    let noise: f64 = (0..m).map(|j| sig[i * m + j] * dw[j]).sum();
                    x[i] += b[i] * dt + amp * noise;
                }
            }
            if !time_independent {
                for i in 0..d {
                    mid[i] = 0.5 * (mid[i] + x[i]);
                }
                work += sys.work_rate(&mid, s + 0.5 * dt) * dt;
            }
            if next_rec < self.recorded.len() && self.recorded[next_rec] == k + 1 {
                states.extend_from_slice(&x);
                next_rec += 1;
            }
            if k % 64 == 63 && !x.iter().all(|v| v.is_finite()) {
                break;
            }
        }
        let finite = x.iter().all(|v| v.is_finite())
            && work.is_finite()
            && log_weight.is_finite()
            && states.len() == self.recorded.len() * d;
        Ok(PathRecord { index, initial, states, work, log_weight, finite })
    }

    /// Merge path records (in any order) into an ensemble ordered by path index.
    pub fn assemble(&self, mut records: Vec<PathRecord>) -> Result<TrajectoryEnsemble> {
        records.sort_by_key(|r| r.index);
        let d = self.system.state_dim();
        let total = records.len();
        let flagged: Vec<usize> = records.iter().filter(|r| !r.finite).map(|r| r.index).collect();
        if flagged.len() * 1000 > total {
            return Err(Error::BlowUp { flagged: flagged.len(), total });
        }
        let kept = total - flagged.len();
        let mut ens = TrajectoryEnsemble {
            dim: d,
            dt: self.config.dt,
            seed: self.config.seed,
            times: self.recorded.iter().map(|&k| self.config.start_time + k as f64 * self.config.dt).collect(),
            steps: self.recorded.clone(),
            path_index: Vec::with_capacity(kept),
            initial: Vec::with_capacity(kept * d),
            states: Vec::with_capacity(kept * d * self.recorded.len()),
            work: Vec::with_capacity(kept),
            log_weight: Vec::with_capacity(kept),
            flagged,
        };
        for r in records.into_iter().filter(|r| r.finite) {
            ens.path_index.push(r.index);
            ens.initial.extend_from_slice(&r.initial);
            ens.states.extend_from_slice(&r.states);
            ens.work.push(r.work);
            ens.log_weight.push(r.log_weight);
        }
        Ok(ens)
    }

    /// Serial run over all paths.
    pub fn run(&self) -> Result<TrajectoryEnsemble> {
        let records = (0..self.config.paths).map(|i| self.run_path(i)).collect::<Result<Vec<_>>>()?;
        self.assemble(records)
    }
}

fn is_diagonal(m: &Mat) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

/// One BAOAB step; `dw` holds the Brownian increments of the step.
fn baoab_step(sys: &LangevinSystem, z: &mut [f64], s: f64, dt: f64, dw: &[f64], grad: &mut [f64]) {
    let spec = &sys.spec;
    let n = spec.dim;
    let (sign, t0, t1) = match sys.direction {
        Direction::Forward => (1.0, s, s + dt),
        Direction::Reverse => (-1.0, spec.horizon - s, spec.horizon - s - dt),
    };
    let (q, p) = z.split_at_mut(n);
    let g = &mut grad[..n];
    spec.potential.gradient(q, t0, g);
    for i in 0..n {
        p[i] -= sign * 0.5 * dt * g[i];
    }
    for i in 0..n {
        q[i] += sign * 0.5 * dt * spec.mass_inverse[(i, i)] * p[i];
    }
    for i in 0..n {
        let mass = spec.mass[(i, i)];
        let c = exp(-spec.friction * dt / mass);
        // dw/√dt is a standard normal
        p[i] = c * p[i] + sqrt((1.0 - c * c) * mass / spec.beta) * dw[i] / sqrt(dt);
    }
    for i in 0..n {
        q[i] += sign * 0.5 * dt * spec.mass_inverse[(i, i)] * p[i];
    }
    spec.potential.gradient(q, t1, g);
    for i in 0..n {
        p[i] -= sign * 0.5 * dt * g[i];
    }
}

pub fn simulate(
    system: &dyn SdeSystem,
    control: Option<&dyn ControlField>,
    init: &dyn InitialLaw,
    config: &SimulationConfig,
) -> Result<TrajectoryEnsemble> {
    PathSimulator::new(system, control, init, config)?.run()
}

pub fn simulate_forward(spec: &DiffusionSpec, init: &dyn InitialLaw, config: &SimulationConfig) -> Result<TrajectoryEnsemble> {
    simulate(&BrownianSystem::forward(spec), None, init, config)
}

pub fn simulate_reverse(spec: &DiffusionSpec, init: &dyn InitialLaw, config: &SimulationConfig) -> Result<TrajectoryEnsemble> {
    simulate(&BrownianSystem::reverse(spec), None, init, config)
}

pub fn simulate_controlled(
    spec: &DiffusionSpec,
    control: &dyn ControlField,
    init: &dyn InitialLaw,
    config: &SimulationConfig,
) -> Result<TrajectoryEnsemble> {
    simulate(&BrownianSystem::forward(spec), Some(control), init, config)
}

pub fn simulate_langevin_forward(
    spec: &LangevinSpec,
    init: &dyn InitialLaw,
    config: &SimulationConfig,
) -> Result<TrajectoryEnsemble> {
    simulate(&LangevinSystem::forward(spec), None, init, config)
}

pub fn simulate_langevin_reverse(
    spec: &LangevinSpec,
    init: &dyn InitialLaw,
    config: &SimulationConfig,
) -> Result<TrajectoryEnsemble> {
    simulate(&LangevinSystem::reverse(spec), None, init, config)
}

pub fn simulate_langevin_controlled(
    spec: &LangevinSpec,
    control: &dyn ControlField,
    init: &dyn InitialLaw,
    config: &SimulationConfig,
) -> Result<TrajectoryEnsemble> {
    simulate(&LangevinSystem::forward(spec), Some(control), init, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearCirculation, QuadraticPotential, Schedule};
    use crate::stats::{mean, std_error, variance};

    fn ou(k: Schedule) -> DiffusionSpec {
        DiffusionSpec::new(1, Arc::new(QuadraticPotential::new(1, k)), 1.0, 1.0).unwrap()
    }

    #[test]
    fn same_seed_same_paths() {
        let spec = ou(Schedule::ramp(1.0, 2.0, 1.0));
        let cfg = SimulationConfig::new(50, 0.01, 9).with_record(Record::Every(10));
        let a = simulate_forward(&spec, &PointMass(vec![0.5]), &cfg).unwrap();
        let b = simulate_forward(&spec, &PointMass(vec![0.5]), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times.len(), 11);
    }

    #[test]
    fn time_independent_work_is_zero() {
        let spec = ou(Schedule::Constant(1.0));
        let cfg = SimulationConfig::new(20, 0.01, 1);
        let e = simulate_forward(&spec, &PointMass(vec![0.5]), &cfg).unwrap();
        assert!(e.work.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn reverse_equals_forward_without_circulation() {
        let spec = ou(Schedule::Constant(1.3));
        let cfg = SimulationConfig::new(10, 0.01, 4);
        let f = simulate_forward(&spec, &PointMass(vec![1.0]), &cfg).unwrap();
        let r = simulate_reverse(&spec, &PointMass(vec![1.0]), &cfg).unwrap();
        assert_eq!(f.states, r.states);
    }

    #[test]
    fn reverse_drift_flips_circulation() {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(2, Schedule::ramp(1.0, 2.0, 1.0)));
        let spec = DiffusionSpec::new(2, pot, 1.0, 1.0).unwrap().with_circulation(Arc::new(LinearCirculation::rotation(0.8)));
        let (x, s) = ([0.3, -0.4], 0.25);
        let (mut f, mut r, mut j) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        spec.drift(&x, spec.horizon - s, &mut f);
        spec.reverse_drift(&x, s, &mut r);
        spec.circulation.value(&x, spec.horizon - s, &mut j);
        for i in 0..2 {
            assert!((r[i] - f[i] + 2.0 * j[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_control_matches_forward() {
        let spec = ou(Schedule::ramp(1.0, 2.0, 1.0));
        let cfg = SimulationConfig::new(10, 0.01, 2);
        let init = GaussianLaw::scalar(0.0, 1.0).unwrap();
        let f = simulate_forward(&spec, &init, &cfg).unwrap();
        let c = simulate_controlled(&spec, &ZeroControl(1), &init, &cfg).unwrap();
        assert_eq!(f.states, c.states);
        assert_eq!(f.work, c.work);
        assert!(c.log_weight.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn pure_diffusion_variance() {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(1, Schedule::Constant(0.0)));
        let spec = DiffusionSpec::new(1, pot, 2.0, 1.0).unwrap();
        let e = simulate_forward(&spec, &PointMass(vec![0.0]), &SimulationConfig::new(20_000, 0.05, 3)).unwrap();
        let x = e.terminal_component(0);
        assert!(mean(&x).abs() < 4.0 * std_error(&x));
        let v = variance(&x);
        let se = v * sqrt(2.0 / x.len() as f64);
        assert!((v - 1.0).abs() < 4.0 * se);
    }

    #[test]
    fn constant_control_shifts_pure_diffusion() {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(1, Schedule::Constant(0.0)));
        let spec = DiffusionSpec::new(1, pot, 1.0, 1.0).unwrap();
        let e = simulate_controlled(&spec, &ConstantControl(vec![0.7]), &PointMass(vec![0.0]), &SimulationConfig::new(20_000, 0.05, 5))
            .unwrap();
        let x = e.terminal_component(0);
        assert!((mean(&x) - 0.7).abs() < 4.0 * std_error(&x));
    }

    #[test]
    fn baoab_keeps_gibbs_stationary() {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(1, Schedule::Constant(1.0)));
        let spec = LangevinSpec::new(1, pot, 1.0, 1.0, 1.0).unwrap();
        let init = spec.gibbs_gaussian(0.0).unwrap();
        let cfg = SimulationConfig::new(20_000, 0.05, 8).with_integrator(Integrator::Baoab);
        let e = simulate_langevin_forward(&spec, &init, &cfg).unwrap();
        let q = e.terminal_component(0);
        let v = variance(&q);
        assert!((v - 1.0).abs() < 4.0 * v * sqrt(2.0 / q.len() as f64) + 0.01);
    }

    #[test]
    fn blow_up_is_reported() {
        // strongly repulsive quadratic: every path overflows
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(1, Schedule::Constant(-1e5)));
        let spec = DiffusionSpec::new(1, pot, 1.0, 1.0).unwrap();
        let r = simulate_forward(&spec, &PointMass(vec![1.0]), &SimulationConfig::new(10, 1e-3, 0));
        assert_eq!(r, Err(Error::BlowUp { flagged: 10, total: 10 }));
    }
}

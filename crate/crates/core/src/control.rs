//! Value function `U = −β⁻¹ ln g`, optimal feedback `u* = −2σᵀ∇U` and the
//! optimal initial law, by Feynman-Kac Monte Carlo, by a backward grid solve
//! of the linear equation for `g`, and in closed form for quadratic specs.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{
    langevin_riccati_value_function, optimal_initial_law, optimal_initial_law_langevin, riccati_value_function,
    OptimalInitialLaw, QuadraticValueFunction,
};
use crate::grid::{Axis, GridDensity};
use crate::linalg::solve_tridiagonal;
use crate::math::{ceil, exp, floor, ln};
use crate::model::{DiffusionSpec, LangevinSpec};
use crate::sde::{
    simulate, ControlField, ControlKind, PointMass, QuadraticControl, Record, SdeSystem, SimulationConfig,
};
use crate::stats;

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub paths: usize,
}

/// `g(x, s) = E[exp(−β∫ₛᵀ ∂V/∂t dt) | x(s) = x]` over uncontrolled paths of
/// `system` (forward Brownian or Langevin).
pub fn feynman_kac_g(system: &dyn SdeSystem, x: &[f64], s: f64, paths: usize, dt: f64, seed: u64) -> Result<McEstimate> {
    if paths < 100 {
        return Err(invalid("Feynman-Kac estimates need at least 100 paths"));
    }
    let horizon = system.horizon();
    if !(0.0..=horizon).contains(&s) {
        return Err(invalid("start time outside [0, T]"));
    }
    if s == horizon || system.is_time_independent() {
        return Ok(McEstimate { value: 1.0, std_error: 0.0, paths });
    }
    let cfg = SimulationConfig::new(paths, dt, seed).with_interval(s, horizon).with_record(Record::Terminal);
    let ens = simulate(system, None, &PointMass(x.to_vec()), &cfg)?;
    let beta = system.beta();
    let values: Vec<f64> = ens.work.iter().map(|w| exp(-beta * w)).collect();
    Ok(McEstimate { value: stats::mean(&values), std_error: stats::std_error(&values), paths: values.len() })
}

/// `U`, `∇U` and the feedback on a one-dimensional grid, stored at every
/// time step of the backward solve.
#[derive(Clone)]
pub struct GridValueFunction {
    pub spec: DiffusionSpec,
    pub axis: Axis,
    pub times: Vec<f64>,
    /// `g` at cell centers, one row per time.
    pub g: Vec<Vec<f64>>,
    /// `∂U/∂x` at cell centers (central differences, one-sided at the ends).
    pub gradient: Vec<Vec<f64>>,
    outside: Arc<AtomicUsize>,
}

impl core::fmt::Debug for GridValueFunction {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("GridValueFunction").field("axis", &self.axis).field("steps", &self.times.len()).finish()
    }
}

impl GridValueFunction {
    fn locate_time(&self, s: f64) -> (usize, f64) {
        let n = self.times.len();
        let h = (self.times[n - 1] - self.times[0]) / (n - 1) as f64;
        let t = ((s - self.times[0]) / h).clamp(0.0, (n - 1) as f64);
        let k = (floor(t) as usize).min(n - 2);
        (k, t - k as f64)
    }

    fn interpolate(&self, table: &[Vec<f64>], x: f64, s: f64) -> f64 {
        let a = self.axis;
        let pos = (x - a.min) / a.spacing() - 0.5;
        if pos < 0.0 || pos > (a.cells - 1) as f64 {
            self.outside.fetch_add(1, Ordering::Relaxed);
        }
        let t = pos.clamp(0.0, (a.cells - 1) as f64);
        let i = (floor(t) as usize).min(a.cells - 2);
        let w = t - i as f64;
        let (k, v) = self.locate_time(s);
        let at = |row: &[f64]| (1.0 - w) * row[i] + w * row[i + 1];
        (1.0 - v) * at(&table[k]) + v * at(&table[k + 1])
    }

    pub fn g_at(&self, x: f64, s: f64) -> f64 {
        self.interpolate(&self.g, x, s)
    }

    /// `U = −β⁻¹ ln g`.
    pub fn value(&self, x: f64, s: f64) -> f64 {
        -ln(self.g_at(x, s)) / self.spec.beta
    }

    pub fn gradient_at(&self, x: f64, s: f64) -> f64 {
        self.interpolate(&self.gradient, x, s)
    }

    /// Number of evaluations that fell outside the box and were clamped to
    /// the outermost cell centers.
    pub fn outside_box_evaluations(&self) -> usize {
        self.outside.load(Ordering::Relaxed)
    }
}

/// `u*(x, s) = −2σ(x, s)ᵀ ∂U/∂x` read off a [`GridValueFunction`].
#[derive(Debug, Clone)]
pub struct GridControl {
    pub value: GridValueFunction,
}

impl ControlField for GridControl {
    fn noise_dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64], s: f64, out: &mut [f64]) {
        let mut sigma = [0.0];
        self.value.spec.noise.sigma(x, s, &mut sigma);
        out[0] = -2.0 * sigma[0] * self.value.gradient_at(x[0], s);
    }
    fn kind(&self) -> ControlKind {
        ControlKind::GridInterpolated
    }
}

/// Options of the backward grid solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GSolveConfig {
    pub dt: f64,
    /// `1` backward Euler, `½` Crank-Nicolson.
    pub theta: f64,
}

impl GSolveConfig {
    pub fn new(dt: f64) -> Self {
        Self { dt, theta: 0.5 }
    }
}

/// Solution of the control problem on a grid.
#[derive(Debug, Clone)]
pub struct GridControlSolution {
    pub value: GridValueFunction,
    /// `ν₀* = e^{−βV(·,0)} g(·,0) / Z(T)`, normalized.
    pub initial: GridDensity,
    /// Mass of `ν₀*` before normalization.
    pub initial_mass: f64,
}

impl GridControlSolution {
    pub fn control(&self) -> GridControl {
        GridControl { value: self.value.clone() }
    }
}

/// Backward solve of `∂g/∂s + ℒ_s g − β(∂V/∂s) g = 0`, `g(·, T) = 1`, on a
/// one-dimensional grid with reflecting ends.
///
/// The generator is written as `β⁻¹e^{βV}∂(γe^{−βV}∂g) + J∂g`; the reaction
/// part is applied as the exact factor `e^{−β(V(x, t₁) − V(x, t₀))}` in two
/// half steps around a θ-step of the generator, so `Σ e^{−βV(xᵢ, s)} gᵢ(s)` is
/// conserved and `ν₀*` has mass one up to the quadrature of `Z(T)`.
pub fn solve_g_pde_1d(spec: &DiffusionSpec, axis: Axis, cfg: GSolveConfig) -> Result<GridControlSolution> {
    if spec.dim != 1 {
        return Err(invalid("solve_g_pde_1d needs a one-dimensional spec"));
    }
    if !(cfg.dt > 0.0) || !(0.5..=1.0).contains(&cfg.theta) {
        return Err(invalid("dt must be positive and theta in [1/2, 1]"));
    }
    let horizon = spec.horizon;
    let steps = ceil(horizon / cfg.dt - 1e-9).max(1.0) as usize;
    let dt = horizon / steps as f64;
    let n = axis.cells;
    let h = axis.spacing();
    let beta = spec.beta;
    let centers = axis.centers();
    let faces: Vec<f64> = (1..n).map(|i| axis.min + i as f64 * h).collect();
    let potential = |x: f64, s: f64| spec.potential.value(&[x], s);

    let mut g = vec![1.0; n];
    let mut table = vec![Vec::new(); steps + 1];
    table[steps] = g.clone();
    let mut gamma = [0.0];
    let mut j = [0.0];
    let has_circulation = !spec.circulation.is_zero();
    for k in (0..steps).rev() {
        let (s0, s1) = (k as f64 * dt, (k + 1) as f64 * dt);
        let sm = 0.5 * (s0 + s1);
        let vm: Vec<f64> = centers.iter().map(|&x| potential(x, sm)).collect();
        for i in 0..n {
            g[i] *= exp(-beta * (potential(centers[i], s1) - vm[i]));
        }
        // operator rows: (ℒg)ᵢ = lᵢ gᵢ₋₁ − (lᵢ + rᵢ) gᵢ + rᵢ gᵢ₊₁
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        let v_ref = vm.iter().copied().fold(f64::INFINITY, f64::min);
        for (f, &xf) in faces.iter().enumerate() {
            spec.noise.gamma(&[xf], sm, &mut gamma);
            let vf = potential(xf, sm);
            // γ e^{−β(V_face − Vᵢ)} / (β h²) for each neighbor
            let base = gamma[0] / (beta * h * h);
            right[f] += base * exp(-beta * (vf - v_ref) + beta * (vm[f] - v_ref));
            left[f + 1] += base * exp(-beta * (vf - v_ref) + beta * (vm[f + 1] - v_ref));
        }
        if has_circulation {
            for i in 0..n {
                spec.circulation.value(&[centers[i]], sm, &mut j);
                if j[0] > 0.0 && i + 1 < n {
                    right[i] += j[0] / h;
                } else if j[0] < 0.0 && i > 0 {
                    left[i] -= j[0] / h;
                }
            }
        }
        let apply = |g: &[f64], i: usize| {
            let lo = if i > 0 { left[i] * (g[i - 1] - g[i]) } else { 0.0 };
            let hi = if i + 1 < n { right[i] * (g[i + 1] - g[i]) } else { 0.0 };
            lo + hi
        };
        let theta = cfg.theta;
        let mut rhs: Vec<f64> = (0..n).map(|i| g[i] + (1.0 - theta) * dt * apply(&g, i)).collect();
        let mut lower = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            if i > 0 {
                lower[i] = -theta * dt * left[i];
                diag[i] += theta * dt * left[i];
            }
            if i + 1 < n {
                upper[i] = -theta * dt * right[i];
                diag[i] += theta * dt * right[i];
            }
        }
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
        g = rhs;
        for i in 0..n {
            g[i] *= exp(-beta * (vm[i] - potential(centers[i], s0)));
        }
        let min = g.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::PositivityLoss { time: s0, min });
        }
        table[k] = g.clone();
    }

    let gradient = table
        .iter()
        .map(|row| {
            let u: Vec<f64> = row.iter().map(|v| -ln(*v) / beta).collect();
            (0..n)
                .map(|i| match i {
                    0 => (u[1] - u[0]) / h,
                    _ if i == n - 1 => (u[n - 1] - u[n - 2]) / h,
                    _ => (u[i + 1] - u[i - 1]) / (2.0 * h),
                })
                .collect()
        })
        .collect();
    let z_t = spec.partition_function(horizon, &spec.default_quadrature(horizon))?.normalizer;
    let g0 = table[0].clone();
    let values: Vec<f64> = centers.iter().zip(&g0).map(|(&x, gi)| exp(-beta * potential(x, 0.0)) * gi / z_t).collect();
    let raw = GridDensity::from_values(vec![axis], values, 0.0)?;
    let initial_mass = raw.mass();
    Ok(GridControlSolution {
        value: GridValueFunction {
            spec: spec.clone(),
            axis,
            times: (0..=steps).map(|k| k as f64 * dt).collect(),
            g: table,
            gradient,
            outside: Arc::new(AtomicUsize::new(0)),
        },
        initial: raw.normalized(),
        initial_mass,
    })
}

/// Closed-form solution for a quadratic spec (Brownian or Langevin).
#[derive(Debug, Clone)]
pub struct QuadraticControlSolution {
    pub value: QuadraticValueFunction,
    pub control: QuadraticControl,
    pub initial: OptimalInitialLaw,
}

/// Riccati value function, affine feedback and Gaussian `ν₀*` of a quadratic Brownian spec.
pub fn brownian_control_solution(spec: &DiffusionSpec, dt: f64) -> Result<QuadraticControlSolution> {
    let value = riccati_value_function(spec, dt)?;
    let initial = optimal_initial_law(spec, &value)?;
    let control = QuadraticControl::brownian(spec, value.clone())?;
    Ok(QuadraticControlSolution { value, control, initial })
}

/// Riccati `𝒰(q, p, s)`, `u* = −2σᵀ∇_p𝒰` and Gaussian `π₀*` of a quadratic Langevin spec.
pub fn langevin_control_solution(spec: &LangevinSpec, dt: f64) -> Result<QuadraticControlSolution> {
    let value = langevin_riccati_value_function(spec, dt)?;
    let initial = optimal_initial_law_langevin(spec, &value)?;
    let control = QuadraticControl::langevin(spec, value.clone());
    Ok(QuadraticControlSolution { value, control, initial })
}

/// Either representation of a solved control problem.
#[derive(Debug, Clone)]
pub enum ControlSolution {
    Grid(GridControlSolution),
    Quadratic(QuadraticControlSolution),
}

impl ControlSolution {
    /// `U(x, s)`.
    pub fn value(&self, x: &[f64], s: f64) -> f64 {
        match self {
            ControlSolution::Grid(g) => g.value.value(x[0], s),
            ControlSolution::Quadratic(q) => q.value.value(x, s),
        }
    }

    /// `∇U(x, s)` (full state gradient).
    pub fn gradient(&self, x: &[f64], s: f64) -> Vec<f64> {
        match self {
            ControlSolution::Grid(g) => vec![g.value.gradient_at(x[0], s)],
            ControlSolution::Quadratic(q) => q.value.gradient(x, s).iter().copied().collect(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ControlSolution::Grid(g) => alloc::format!("grid value function on {} cells", g.value.axis.cells),
            ControlSolution::Quadratic(q) => alloc::format!("quadratic value function of dimension {}", q.value.dim()),
        }
    }
}

/// `σ` of a one-dimensional spec at `(x, s)`.
pub fn scalar_sigma(spec: &DiffusionSpec, x: f64, s: f64) -> f64 {
    let mut out = [0.0];
    spec.noise.sigma(&[x], s, &mut out);
    out[0]
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::fokker_planck::gibbs_axis;
    use crate::model::{Potential, QuadraticPotential, Schedule};
    use crate::sde::BrownianSystem;

    fn spec(k: Schedule) -> DiffusionSpec {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(1, k));
        DiffusionSpec::new(1, pot, 1.0, 1.0).unwrap()
    }

    #[test]
    fn time_independent_potential_gives_unit_g() {
        let spec = spec(Schedule::Constant(1.0));
        let est = feynman_kac_g(&BrownianSystem::forward(&spec), &[0.3], 0.2, 100, 1e-2, 1).unwrap();
        assert_eq!((est.value, est.std_error), (1.0, 0.0));
        let sol = solve_g_pde_1d(&spec, gibbs_axis(&spec, 0.0, 100), GSolveConfig::new(1e-2)).unwrap();
        assert!(sol.value.g.iter().flatten().all(|v| (v - 1.0).abs() < 1e-13));
        assert!((sol.initial_mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn grid_value_matches_riccati() {
        let spec = spec(Schedule::ramp(1.0, 2.0, 1.0));
        let axis = gibbs_axis(&spec, 0.0, 400);
        let sol = solve_g_pde_1d(&spec, axis, GSolveConfig::new(1e-3)).unwrap();
        let exact = riccati_value_function(&spec, 1e-3).unwrap();
        let mut worst: f64 = 0.0;
        for &s in &[0.0, 0.25, 0.5, 0.75] {
            for k in 0..21 {
                let x = -2.0 + 0.2 * k as f64;
                worst = worst.max((sol.value.value(x, s) - exact.value(&[x], s)).abs());
            }
        }
        assert!(worst < 1e-3, "{worst}");
        assert!((sol.initial_mass - 1.0).abs() < 1e-6, "{}", sol.initial_mass);
    }

    #[test]
    fn closed_form_initial_law_has_unit_mass() {
        let sol = brownian_control_solution(&spec(Schedule::ramp(1.0, 2.0, 1.0)), 1e-3).unwrap();
        assert!((sol.initial.mass - 1.0).abs() < 1e-6);
    }
}

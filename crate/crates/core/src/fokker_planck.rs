//! Finite-volume solvers for the Brownian Fokker-Planck equation in one
//! dimension and the kinetic Langevin equation on a `(q, p)` grid, plus grid
//! quadrature of relative entropy and Fisher-type terms.
//!
//! Diffusive fluxes use the exponentially fitted (Chang-Cooper /
//! Scharfetter-Gummel) form, so the sampled Gibbs density is an exact
//! discrete steady state and the implicit step is an M-matrix solve.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::grid::{Axis, GridDensity};
use crate::linalg::solve_tridiagonal;
use crate::math::{ceil, exp, expm1, ln, sqrt};
use crate::model::{DiffusionSpec, LangevinSpec, QuadratureConfig};

/// `z / (eᶻ − 1)`
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / expm1(z)
    }
}

/// Divergence operator of the fitted flux
/// `F_{i+½} = (D/h)[B(w)ρᵢ − B(−w)ρᵢ₊₁]`, `w = βΦᵢ₊₁ − βΦᵢ`, with zero flux at
/// both ends; `∂ρ/∂s = −(F_{i+½} − F_{i−½})/h`.
#[derive(Debug, Clone)]
struct FittedOperator {
    lo: Vec<f64>,
    hi: Vec<f64>,
    h: f64,
}

impl FittedOperator {
    /// `beta_phi` at cell centers, `diffusivity` at the `n − 1` interior faces.
    fn new(beta_phi: &[f64], diffusivity: &[f64], h: f64) -> Self {
        let n = beta_phi.len();
        let mut lo = vec![0.0; n - 1];
        let mut hi = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let w = beta_phi[i + 1] - beta_phi[i];
            lo[i] = diffusivity[i] / h * bernoulli(w);
            hi[i] = diffusivity[i] / h * bernoulli(-w);
        }
        Self { lo, hi, h }
    }

    fn flux(&self, rho: &[f64], i: usize) -> f64 {
        self.lo[i] * rho[i] - self.hi[i] * rho[i + 1]
    }

    /// `θ`-scheme step `(I + θ dt A) ρ⁺ = (I − (1 − θ) dt A) ρ`.
    fn step(&self, rho: &mut [f64], dt: f64, theta: f64) {
        let n = rho.len();
        let r = dt / self.h;
        if theta < 1.0 {
            let mut rhs = rho.to_vec();
            for i in 0..n - 1 {
                let f = (1.0 - theta) * r * self.flux(rho, i);
                rhs[i] -= f;
                rhs[i + 1] += f;
            }
            rho.copy_from_slice(&rhs);
        }
        let mut lower = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n - 1 {
            diag[i] += theta * r * self.lo[i];
            upper[i] = -theta * r * self.hi[i];
            diag[i + 1] += theta * r * self.hi[i];
            lower[i + 1] = -theta * r * self.lo[i];
        }
        solve_tridiagonal(&lower, &diag, &upper, rho);
    }
}

/// Time stepping of the grid solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct FpConfig {
    pub dt: f64,
    /// `1` backward Euler (positivity for any step), `½` Crank-Nicolson.
    pub theta: f64,
    /// Largest tolerated mass fraction in the two outermost cells.
    pub boundary_threshold: f64,
    /// Courant number for explicit transport.
    pub cfl: f64,
}

impl FpConfig {
    pub fn new(dt: f64) -> Self {
        Self { dt, theta: 1.0, boundary_threshold: 1e-10, cfl: 0.4 }
    }

    pub fn crank_nicolson(mut self) -> Self {
        self.theta = 0.5;
        self
    }
}

/// Axis over `center ± 10` Gibbs standard deviations at time `s`.
pub fn gibbs_axis(spec: &DiffusionSpec, s: f64, cells: usize) -> Axis {
    let q = QuadratureConfig::gaussian_envelope(spec.potential.as_ref(), 1, spec.beta, s);
    Axis::centered(q.center[0], q.half_width * 10.0 / 8.0, cells)
}

/// `(q, p)` axes over 10 Gibbs standard deviations at time `s`.
pub fn phase_space_axes(spec: &LangevinSpec, s: f64, q_cells: usize, p_cells: usize) -> (Axis, Axis) {
    let q = QuadratureConfig::gaussian_envelope(spec.potential.as_ref(), 1, spec.beta, s);
    let p_std = sqrt(spec.mass[(0, 0)] / spec.beta);
    (
        Axis::centered(q.center[0], q.half_width * 10.0 / 8.0, q_cells),
        Axis::centered(0.0, 10.0 * p_std, p_cells),
    )
}

fn check_step(values: &mut [f64], time: f64) -> Result<()> {
    let max = values.iter().copied().fold(0.0, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() || min < -1e-14 * max.max(1.0) {
        return Err(Error::PositivityLoss { time, min });
    }
    values.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(())
}

fn boundary_fraction_1d(values: &[f64]) -> f64 {
    let n = values.len();
    let total: f64 = values.iter().sum();
    (values[0] + values[1] + values[n - 2] + values[n - 1]) / total
}

fn boundary_fraction_2d(values: &[f64], nq: usize, np: usize) -> f64 {
    let total: f64 = values.iter().sum();
    let mut edge = 0.0;
    for i in 0..nq {
        for j in 0..np {
            if i < 2 || j < 2 || i + 2 >= nq || j + 2 >= np {
                edge += values[i * np + j];
            }
        }
    }
    edge / total
}

fn check_leakage(fraction: f64, threshold: f64) -> Result<()> {
    if fraction > threshold {
        return Err(Error::BoundaryLeakage { mass: fraction, threshold });
    }
    Ok(())
}

fn step_counts(times: &[f64], start: f64, dt: f64) -> Result<Vec<(usize, f64)>> {
    if times.is_empty() || times[0] < start - 1e-12 || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("output times must be ascending and not before the initial time"));
    }
    let mut prev = start;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let span = t - prev;
        let n = if span <= 1e-14 { 0 } else { ceil(span / dt - 1e-9) as usize };
        out.push((n, if n == 0 { 0.0 } else { span / n as f64 }));
        prev = t;
    }
    Ok(out)
}

/// Brownian Fokker-Planck equation `∂ρ/∂s = −∂ₓ(Jρ − β⁻¹γ e^{−βV} ∂ₓ(e^{βV}ρ))`
/// in one dimension; returns the density at each of `times`.
pub fn solve_fp_1d(spec: &DiffusionSpec, init: &GridDensity, times: &[f64], cfg: &FpConfig) -> Result<Vec<GridDensity>> {
    if spec.dim != 1 || init.dim() != 1 {
        return Err(invalid("solve_fp_1d needs a one-dimensional spec and grid"));
    }
    if !(cfg.dt > 0.0) || !(0.5..=1.0).contains(&cfg.theta) {
        return Err(invalid("dt must be positive and theta in [1/2, 1]"));
    }
    let axis = init.axes[0];
    let n = axis.cells;
    let h = axis.spacing();
    let centers = axis.centers();
    let faces: Vec<f64> = (1..n).map(|i| axis.min + i as f64 * h).collect();
    let has_circulation = !spec.circulation.is_zero();
    let mut rho = init.clone().normalized().values;
    let mut s = init.time;
    let mut out = Vec::with_capacity(times.len());
    let mut beta_phi = vec![0.0; n];
    let mut diff = vec![0.0; n - 1];
    let mut gamma = [0.0];
    let mut j = [0.0];
    check_leakage(boundary_fraction_1d(&rho), cfg.boundary_threshold)?;
    for (k, (steps, dt)) in step_counts(times, s, cfg.dt)?.into_iter().enumerate() {
        for _ in 0..steps {
            if has_circulation {
                // explicit upwind transport by J, evaluated at the start of the step
                let mut vmax: f64 = 0.0;
                let mut flux = vec![0.0; n - 1];
                for i in 0..n - 1 {
                    spec.circulation.value(&[faces[i]], s, &mut j);
                    vmax = vmax.max(j[0].abs());
                    flux[i] = if j[0] > 0.0 { j[0] * rho[i] } else { j[0] * rho[i + 1] };
                }
                if vmax * dt > cfg.cfl * h {
                    return Err(Error::Cfl { dt, required: cfg.cfl * h / vmax });
                }
                for i in 0..n - 1 {
                    rho[i] -= dt / h * flux[i];
                    rho[i + 1] += dt / h * flux[i];
                }
            }
            let t = s + cfg.theta * dt;
            for (b, &x) in beta_phi.iter_mut().zip(&centers) {
                *b = spec.beta * spec.potential.value(&[x], t);
            }
            for (d, &x) in diff.iter_mut().zip(&faces) {
                spec.noise.gamma(&[x], t, &mut gamma);
                *d = gamma[0] / spec.beta;
            }
            FittedOperator::new(&beta_phi, &diff, h).step(&mut rho, dt, cfg.theta);
            s += dt;
            check_step(&mut rho, s)?;
        }
        s = times[k];
        check_leakage(boundary_fraction_1d(&rho), cfg.boundary_threshold)?;
        out.push(GridDensity { axes: vec![axis], values: rho.clone(), time: s });
    }
    Ok(out)
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Upwind MUSCL face value between `v[i]` and `v[i + 1]`.
fn face_value(v: &[f64], i: usize, forward: bool) -> f64 {
    let n = v.len();
    if forward {
        let slope = if i == 0 { 0.0 } else { minmod(v[i] - v[i - 1], v[i + 1] - v[i]) };
        v[i] + 0.5 * slope
    } else {
        let slope = if i + 2 >= n { 0.0 } else { minmod(v[i + 1] - v[i], v[i + 2] - v[i + 1]) };
        v[i + 1] - 0.5 * slope
    }
}

/// Hamiltonian transport on the `(q, p)` grid, written so that `A(q)G(p)`
/// with `A = e^{−βV}`, `G = e^{−βp²/2M}` is an exact steady state.
struct Transport<'a> {
    spec: &'a LangevinSpec,
    q: Axis,
    p: Axis,
    g: Vec<f64>,
    g_face: Vec<f64>,
    velocity: Vec<f64>,
}

struct TransportCoefficients {
    a: Vec<f64>,
    a_face: Vec<f64>,
    force: Vec<f64>,
}

impl<'a> Transport<'a> {
    fn new(spec: &'a LangevinSpec, q: Axis, p: Axis) -> Self {
        let beta = spec.beta;
        let minv = spec.mass_inverse[(0, 0)];
        let (hp, np) = (p.spacing(), p.cells);
        let phi = |v: f64| exp(-beta * 0.5 * minv * v * v);
        let g: Vec<f64> = (0..np).map(|j| phi(p.center(j))).collect();
        let g_face: Vec<f64> = (0..=np).map(|j| phi(p.min + j as f64 * hp)).collect();
        let velocity = (0..np).map(|j| -(g_face[j + 1] - g_face[j]) / (beta * hp * g[j])).collect();
        Self { spec, q, p, g, g_face, velocity }
    }

    fn coefficients(&self, s: f64) -> TransportCoefficients {
        let beta = self.spec.beta;
        let (hq, nq) = (self.q.spacing(), self.q.cells);
        let pot = |x: f64| self.spec.potential.value(&[x], s);
        let v_ref = (0..nq).map(|i| pot(self.q.center(i))).fold(f64::INFINITY, f64::min);
        let a: Vec<f64> = (0..nq).map(|i| exp(-beta * (pot(self.q.center(i)) - v_ref))).collect();
        let a_face: Vec<f64> = (0..=nq).map(|i| exp(-beta * (pot(self.q.min + i as f64 * hq) - v_ref))).collect();
        let force = (0..nq).map(|i| -(a_face[i + 1] - a_face[i]) / (beta * hq * a[i])).collect();
        TransportCoefficients { a, a_face, force }
    }

    fn max_step(&self, c: &TransportCoefficients, cfl: f64) -> f64 {
        let vmax = self.velocity.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let fmax = c.force.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        cfl / (vmax / self.q.spacing() + fmax / self.p.spacing())
    }

    /// `−div` of the transport flux of `rho`.
    fn rate(&self, c: &TransportCoefficients, rho: &[f64], out: &mut [f64]) {
        let (nq, np) = (self.q.cells, self.p.cells);
        let (hq, hp) = (self.q.spacing(), self.p.spacing());
        out.iter_mut().for_each(|v| *v = 0.0);
        let h: Vec<f64> = (0..nq * np).map(|k| rho[k] / (c.a[k / np] * self.g[k % np])).collect();
        let mut col = vec![0.0; nq];
        for j in 0..np {
            let vel = self.velocity[j];
            for i in 0..nq {
                col[i] = h[i * np + j];
            }
            for i in 0..nq - 1 {
                let flux = vel * c.a_face[i + 1] * self.g[j] * face_value(&col, i, vel > 0.0) / hq;
                out[i * np + j] -= flux;
                out[(i + 1) * np + j] += flux;
            }
        }
        for i in 0..nq {
            // dp/ds = −V'(q) ≈ −Fᵢ
            let vel = -c.force[i];
            let row = &h[i * np..(i + 1) * np];
            for j in 0..np - 1 {
                let flux = vel * c.a[i] * self.g_face[j + 1] * face_value(row, j, vel > 0.0) / hp;
                out[i * np + j] -= flux;
                out[i * np + j + 1] += flux;
            }
        }
    }

    /// SSP-RK2 substeps covering `[s, s + span]`.
    fn advance(&self, rho: &mut [f64], s: f64, span: f64, cfl: f64) {
        let c0 = self.coefficients(s);
        let subs = ceil(span / self.max_step(&c0, cfl)).max(1.0) as usize;
        let dt = span / subs as f64;
        let mut k1 = vec![0.0; rho.len()];
        let mut k2 = vec![0.0; rho.len()];
        let mut stage = vec![0.0; rho.len()];
        for m in 0..subs {
            let t = s + m as f64 * dt;
            let c1 = if m == 0 { None } else { Some(self.coefficients(t)) };
            self.rate(c1.as_ref().unwrap_or(&c0), rho, &mut k1);
            for k in 0..rho.len() {
                stage[k] = rho[k] + dt * k1[k];
            }
            let c2 = self.coefficients(t + dt);
            self.rate(&c2, &stage, &mut k2);
            for k in 0..rho.len() {
                rho[k] = 0.5 * rho[k] + 0.5 * (stage[k] + dt * k2[k]);
            }
        }
    }
}

/// Kinetic Fokker-Planck equation for `n = 1`:
/// `∂ϱ/∂s = −∂_q(M⁻¹pϱ) + ∂_p(V'ϱ) + ξ∂_p(M⁻¹pϱ + β⁻¹∂_pϱ)`, by Strang
/// splitting (transport half step, implicit friction-diffusion in `p`,
/// transport half step).
pub fn solve_kinetic_fp_2d(
    spec: &LangevinSpec,
    init: &GridDensity,
    times: &[f64],
    cfg: &FpConfig,
) -> Result<Vec<GridDensity>> {
    if spec.dim != 1 || init.dim() != 2 {
        return Err(invalid("solve_kinetic_fp_2d needs n = 1 and a (q, p) grid"));
    }
    if !(cfg.dt > 0.0) || !(0.5..=1.0).contains(&cfg.theta) {
        return Err(invalid("dt must be positive and theta in [1/2, 1]"));
    }
    let (qa, pa) = (init.axes[0], init.axes[1]);
    let (nq, np) = (qa.cells, pa.cells);
    let hp = pa.spacing();
    let transport = Transport::new(spec, qa, pa);
    let minv = spec.mass_inverse[(0, 0)];
    let beta_phi: Vec<f64> = (0..np).map(|j| 0.5 * spec.beta * minv * pa.center(j) * pa.center(j)).collect();
    let friction = FittedOperator::new(&beta_phi, &vec![spec.friction / spec.beta; np - 1], hp);
    let mut rho = init.clone().normalized().values;
    let mut s = init.time;
    let mut out = Vec::with_capacity(times.len());
    let mut col = vec![0.0; np];
    check_leakage(boundary_fraction_2d(&rho, nq, np), cfg.boundary_threshold)?;
    for (k, (steps, dt)) in step_counts(times, s, cfg.dt)?.into_iter().enumerate() {
        for _ in 0..steps {
            transport.advance(&mut rho, s, 0.5 * dt, cfg.cfl);
            for i in 0..nq {
                col.copy_from_slice(&rho[i * np..(i + 1) * np]);
                friction.step(&mut col, dt, cfg.theta);
                rho[i * np..(i + 1) * np].copy_from_slice(&col);
            }
            transport.advance(&mut rho, s + 0.5 * dt, 0.5 * dt, cfg.cfl);
            s += dt;
            check_step(&mut rho, s)?;
        }
        s = times[k];
        check_leakage(boundary_fraction_2d(&rho, nq, np), cfg.boundary_threshold)?;
        out.push(GridDensity { axes: vec![qa, pa], values: rho.clone(), time: s });
    }
    Ok(out)
}

/// `∫ρ ln(ρ/ρ∞)` on a common grid; both densities are normalized first and
/// cells with `ρ < 1e−300` contribute zero.
pub fn relative_entropy_grid(density: &GridDensity, reference: &GridDensity) -> Result<f64> {
    density.check_same_grid(reference)?;
    let (m1, m2) = (density.mass(), reference.mass());
    if !(m1 > 0.0 && m2 > 0.0) {
        return Err(invalid("densities must have positive mass"));
    }
    let mut bad = Vec::new();
    let mut acc = 0.0;
    for (k, (&a, &b)) in density.values.iter().zip(&reference.values).enumerate() {
        let p = a / m1;
        if p < 1e-300 {
            continue;
        }
        let q = b / m2;
        if !(q > 0.0) {
            bad.push(k);
            continue;
        }
        acc += p * ln(p / q);
    }
    if !bad.is_empty() {
        return Err(Error::SupportMismatch { cells: bad });
    }
    Ok((acc * density.cell_volume()).max(0.0))
}

/// Terms of the entropy production identity at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTerms {
    pub time: f64,
    /// `∫|σᵀ∇ ln(ρ/ρ∞)|² ρ` (full gradient for Brownian, `∇_p` only for Langevin).
    pub fisher: f64,
    /// `β∫∂V/∂s ρ`
    pub work_density: f64,
    /// `β∫∂V/∂s ρ∞`
    pub work_gibbs: f64,
    pub beta: f64,
}

impl RateTerms {
    /// `−β∫∂V/∂s dρ∞ + β∫∂V/∂s dρ − β⁻¹ fisher`
    pub fn rate(&self) -> f64 {
        -self.work_gibbs + self.work_density - self.fisher / self.beta
    }
}

fn interior_zeros(values: &[f64], is_interior: impl Fn(usize) -> bool) -> Result<()> {
    let cells: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(k, v)| is_interior(*k) && !(**v > 0.0))
        .map(|(k, _)| k)
        .collect();
    if cells.is_empty() {
        Ok(())
    } else {
        Err(Error::ZeroInterior { cells })
    }
}

/// Central (one-sided at the ends) derivative of `u` along a line.
fn derivative(u: &[f64], i: usize, h: f64) -> f64 {
    let n = u.len();
    if i == 0 {
        (u[1] - u[0]) / h
    } else if i == n - 1 {
        (u[n - 1] - u[n - 2]) / h
    } else {
        (u[i + 1] - u[i - 1]) / (2.0 * h)
    }
}

/// Fisher information and work terms of a one-dimensional Brownian density at time `s`.
pub fn fisher_and_rate_terms(density: &GridDensity, spec: &DiffusionSpec, s: f64) -> Result<RateTerms> {
    if density.dim() != 1 || spec.dim != 1 {
        return Err(invalid("one-dimensional density expected"));
    }
    let n = density.len();
    interior_zeros(&density.values, |k| k > 0 && k + 1 < n)?;
    let gibbs = spec.gibbs_grid(s, density.axes.clone())?;
    let rho = density.clone().normalized();
    let axis = density.axes[0];
    let h = axis.spacing();
    let u: Vec<f64> = rho.values.iter().zip(&gibbs.values).map(|(a, b)| ln(a.max(1e-300) / b)).collect();
    let mut gamma = [0.0];
    let (mut fisher, mut wd, mut wg) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let x = [axis.center(i)];
        spec.noise.gamma(&x, s, &mut gamma);
        let du = derivative(&u, i, h);
        fisher += gamma[0] * du * du * rho.values[i];
        let vs = spec.potential.time_derivative(&x, s);
        wd += vs * rho.values[i];
        wg += vs * gibbs.values[i];
    }
    Ok(RateTerms { time: s, fisher: fisher * h, work_density: spec.beta * wd * h, work_gibbs: spec.beta * wg * h, beta: spec.beta })
}

/// `∇_p`-only Fisher term and work terms of a phase-space density (`n = 1`).
pub fn fisher_and_rate_terms_langevin(density: &GridDensity, spec: &LangevinSpec, s: f64) -> Result<RateTerms> {
    if density.dim() != 2 || spec.dim != 1 {
        return Err(invalid("(q, p) density expected"));
    }
    let (qa, pa) = (density.axes[0], density.axes[1]);
    let (nq, np) = (qa.cells, pa.cells);
    interior_zeros(&density.values, |k| {
        let (i, j) = (k / np, k % np);
        i > 0 && j > 0 && i + 1 < nq && j + 1 < np
    })?;
    let gibbs = spec.gibbs_grid(s, qa, pa)?;
    let rho = density.clone().normalized();
    let hp = pa.spacing();
    let vol = density.cell_volume();
    let (mut fisher, mut wd, mut wg) = (0.0, 0.0, 0.0);
    let mut row = vec![0.0; np];
    for i in 0..nq {
        for j in 0..np {
            let k = i * np + j;
            row[j] = ln(rho.values[k].max(1e-300) / gibbs.values[k]);
        }
        let vs = spec.potential.time_derivative(&[qa.center(i)], s);
        for j in 0..np {
            let k = i * np + j;
            let du = derivative(&row, j, hp);
            fisher += spec.friction * du * du * rho.values[k];
            wd += vs * rho.values[k];
            wg += vs * gibbs.values[k];
        }
    }
    Ok(RateTerms { time: s, fisher: fisher * vol, work_density: spec.beta * wd * vol, work_gibbs: spec.beta * wg * vol, beta: spec.beta })
}

/// Moments of a one-dimensional grid density: `(mean, variance)`.
pub fn grid_moments_1d(density: &GridDensity) -> (f64, f64) {
    (density.mean()[0], density.covariance()[(0, 0)])
}

/// Describes why a grid is unsuitable, or `None`.
pub fn grid_diagnostic(density: &GridDensity) -> Option<String> {
    let n = density.len();
    let frac = if density.dim() == 1 {
        boundary_fraction_1d(&density.values)
    } else {
        boundary_fraction_2d(&density.values, density.axes[0].cells, density.axes[1].cells)
    };
    (frac > 1e-10 || n < 4).then(|| alloc::format!("boundary mass fraction {frac:.3e} on {n} cells"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{ou_moments, GaussianLaw};
    use crate::model::{Potential, QuadraticPotential, Schedule};
    use alloc::sync::Arc;

    fn spec(k: Schedule) -> DiffusionSpec {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(1, k));
        DiffusionSpec::new(1, pot, 1.0, 1.0).unwrap()
    }

    #[test]
    fn gibbs_is_a_fixed_point() {
        let spec = spec(Schedule::Constant(1.5));
        let axis = gibbs_axis(&spec, 0.0, 200);
        let g = spec.gibbs_grid(0.0, vec![axis]).unwrap();
        let out = solve_fp_1d(&spec, &g, &[1.0], &FpConfig::new(1e-2)).unwrap();
        let drift = out[0].values.iter().zip(&g.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-12, "{drift}");
    }

    #[test]
    fn mass_is_conserved_over_many_steps() {
        let spec = spec(Schedule::ramp(1.0, 2.0, 1.0));
        let axis = gibbs_axis(&spec, 0.0, 120);
        let init = GridDensity::from_log_fn(vec![axis], 0.0, |x| -2.0 * (x[0] - 1.0) * (x[0] - 1.0)).unwrap();
        let out = solve_fp_1d(&spec, &init, &[1.0], &FpConfig::new(1e-4)).unwrap();
        assert!((out[0].mass() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ou_moments_are_reproduced() {
        let spec = spec(Schedule::ramp(1.0, 2.0, 1.0));
        let axis = Axis::new(-8.0, 8.0, 400);
        let init = GridDensity::from_log_fn(vec![axis], 0.0, |x| -(x[0] - 1.0) * (x[0] - 1.0) / (2.0 * 0.5)).unwrap();
        let out = solve_fp_1d(&spec, &init, &[0.5], &FpConfig::new(1e-3).crank_nicolson()).unwrap();
        let exact = ou_moments(&spec, &GaussianLaw::scalar(1.0, 0.5).unwrap(), 0.5).unwrap();
        let (m, v) = grid_moments_1d(&out[0]);
        assert!((m - exact.mean[0]).abs() < 1e-3, "{m} {}", exact.mean[0]);
        assert!((v - exact.cov[(0, 0)]).abs() < 1e-3, "{v} {}", exact.cov[(0, 0)]);
    }

    #[test]
    fn kinetic_gibbs_is_stationary() {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(1, Schedule::Constant(1.0)));
        let spec = LangevinSpec::new(1, pot, 1.0, 1.0, 1.0).unwrap();
        let (qa, pa) = phase_space_axes(&spec, 0.0, 60, 60);
        let g = spec.gibbs_grid(0.0, qa, pa).unwrap();
        let out = solve_kinetic_fp_2d(&spec, &g, &[0.5], &FpConfig::new(1e-2)).unwrap();
        let drift = out[0].values.iter().zip(&g.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-12, "{drift}");
    }

    #[test]
    fn shifted_gaussian_relative_entropy() {
        let axis = Axis::new(-12.0, 12.0, 800);
        let p = GridDensity::from_log_fn(vec![axis], 0.0, |x| -0.5 * (x[0] - 1.0) * (x[0] - 1.0)).unwrap();
        let q = GridDensity::from_log_fn(vec![axis], 0.0, |x| -0.5 * x[0] * x[0]).unwrap();
        assert!((relative_entropy_grid(&p, &q).unwrap() - 0.5).abs() < 1e-10);
        assert_eq!(relative_entropy_grid(&q, &q).unwrap(), 0.0);
        let l1 = p.l1_distance(&q).unwrap();
        assert!(relative_entropy_grid(&p, &q).unwrap() >= 0.125 * l1 * l1);
    }

    #[test]
    fn fisher_of_shifted_gaussian() {
        let spec = spec(Schedule::Constant(1.0));
        let axis = Axis::new(-12.0, 12.0, 2000);
        let p = GridDensity::from_log_fn(vec![axis], 0.0, |x| -0.5 * (x[0] - 1.0) * (x[0] - 1.0)).unwrap();
        let t = fisher_and_rate_terms(&p, &spec, 0.0).unwrap();
        assert!((t.fisher - 1.0).abs() < 1e-6);
        assert_eq!(t.work_density, 0.0);
    }
}

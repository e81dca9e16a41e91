//! Relative entropy to the transient Gibbs measure: production-rate checks,
//! decay bounds for Brownian and Langevin dynamics, hypocoercivity
//! certificates and the classical transport/entropy inequalities.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::fokker_planck::{fisher_and_rate_terms, fisher_and_rate_terms_langevin, relative_entropy_grid, RateTerms};
use crate::gaussian::{gaussian_kl, gaussian_l1_distance, log_ratio_gradient, wasserstein2, GaussianLaw};
use crate::grid::GridDensity;
use crate::linalg::{symmetric_eigenvalues, sym2_eigenvalues, Mat};
use crate::math::{exp, ln, sqrt};
use crate::model::{DiffusionSpec, LangevinSpec, Potential};
use crate::quadrature::adaptive_simpson;

/// A hypocoercivity certificate constraint that failed.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{constraint} violated: {detail}")]
pub struct CertificateViolation {
    pub constraint: &'static str,
    pub detail: String,
}

/// Relative entropy along a uniform time grid, with both sides of the
/// production-rate identity.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTrace {
    pub times: Vec<f64>,
    pub relative_entropy: Vec<f64>,
    /// Finite-difference `dR/ds`.
    pub derivative: Vec<f64>,
    /// Right-hand side of the production-rate identity.
    pub rhs: Vec<f64>,
    pub fisher: Vec<f64>,
    pub bound: Option<Vec<f64>>,
}

impl EntropyTrace {
    fn from_terms(times: &[f64], relative_entropy: Vec<f64>, terms: &[RateTerms]) -> Result<Self> {
        let derivative = fd_derivative(times, &relative_entropy)?;
        Ok(Self {
            times: times.to_vec(),
            relative_entropy,
            derivative,
            rhs: terms.iter().map(RateTerms::rate).collect(),
            fisher: terms.iter().map(|t| t.fisher).collect(),
            bound: None,
        })
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.derivative.iter().zip(&self.rhs).map(|(d, r)| (d - r).abs()).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals().into_iter().fold(0.0, f64::max)
    }

    /// Largest finite-difference `dR/ds`; nonpositive up to discretization
    /// error for a time-independent potential.
    pub fn max_derivative(&self) -> f64 {
        self.derivative.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `R(s) − bound(s)`; `None` without a bound.
    pub fn max_bound_excess(&self) -> Option<f64> {
        let b = self.bound.as_ref()?;
        Some(self.relative_entropy.iter().zip(b).map(|(r, b)| r - b).fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Fourth-order finite differences on a uniform grid; five-point one-sided
/// stencils at the two ends on each side.
pub fn fd_derivative(times: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    let n = times.len();
    if n < 5 || values.len() != n {
        return Err(invalid("finite differences need at least five equally long samples"));
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    if times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0)) || !(h > 0.0) {
        return Err(invalid("finite differences need a uniform ascending grid"));
    }
    let f = values;
    let mut d = vec![0.0; n];
    for i in 0..n {
        d[i] = if i >= 2 && i + 2 < n {
            (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / (12.0 * h)
        } else if i == 0 {
            (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
        } else if i == 1 {
            (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h)
        } else if i == n - 2 {
            (3.0 * f[n - 1] + 10.0 * f[n - 2] - 18.0 * f[n - 3] + 6.0 * f[n - 4] - f[n - 5]) / (12.0 * h)
        } else {
            (25.0 * f[n - 1] - 48.0 * f[n - 2] + 36.0 * f[n - 3] - 16.0 * f[n - 4] + 3.0 * f[n - 5]) / (12.0 * h)
        };
    }
    Ok(d)
}

/// `E[xᵀQx + q·x + q₀]` under `N(m, C)`.
fn quadratic_expectation(law: &GaussianLaw, quad: &Mat, lin: &crate::linalg::Vector, c: f64) -> f64 {
    (quad * &law.cov).trace() + law.mean.dot(&(quad * &law.mean)) + lin.dot(&law.mean) + c
}

/// Both sides' ingredients in closed form for a Gaussian law of the Brownian
/// dynamics with a quadratic potential and constant-in-space noise.
pub fn brownian_rate_terms_gaussian(spec: &DiffusionSpec, law: &GaussianLaw, s: f64) -> Result<RateTerms> {
    let quad = spec.potential.quadratic(s).ok_or(Error::NonQuadratic { time: s })?;
    let sigma = spec
        .noise
        .constant(s)
        .ok_or_else(|| Error::Unsupported(String::from("state-dependent noise in a Gaussian rate check")))?;
    let gamma = &sigma * sigma.transpose();
    let gibbs = spec.gibbs_gaussian(s)?;
    let (g, h) = log_ratio_gradient(law, &gibbs)?;
    let vm = &g * &law.mean + h;
    let fisher = (&gamma * &g * &law.cov * g.transpose()).trace() + vm.dot(&(&gamma * &vm));
    let (qq, ql, q0) = quad.time_derivative_coefficients();
    Ok(RateTerms {
        time: s,
        fisher,
        work_density: spec.beta * quadratic_expectation(law, &qq, &ql, q0),
        work_gibbs: spec.beta * quadratic_expectation(&gibbs, &qq, &ql, q0),
        beta: spec.beta,
    })
}

/// Phase-space analogue with the `∇_p`-only Fisher term `ξ∫|∇_p u|²dπ`.
pub fn langevin_rate_terms_gaussian(spec: &LangevinSpec, law: &GaussianLaw, s: f64) -> Result<RateTerms> {
    let n = spec.dim;
    let quad = spec.potential.quadratic(s).ok_or(Error::NonQuadratic { time: s })?;
    let gibbs = spec.gibbs_gaussian(s)?;
    let (g, h) = log_ratio_gradient(law, &gibbs)?;
    let gp = g.rows(n, n).into_owned();
    let vm = (&g * &law.mean + h).rows(n, n).into_owned();
    let fisher = spec.friction * ((&gp * &law.cov * gp.transpose()).trace() + vm.norm_squared());
    let (qq, ql, q0) = quad.time_derivative_coefficients();
    let q_law = law.marginal(&(0..n).collect::<Vec<_>>())?;
    let q_gibbs = spec.position_gibbs_gaussian(s)?;
    Ok(RateTerms {
        time: s,
        fisher,
        work_density: spec.beta * quadratic_expectation(&q_law, &qq, &ql, q0),
        work_gibbs: spec.beta * quadratic_expectation(&q_gibbs, &qq, &ql, q0),
        beta: spec.beta,
    })
}

/// Brownian production-rate check on Gaussian laws `ν_s` at the given uniform times.
pub fn production_rate_check_brownian(spec: &DiffusionSpec, laws: &[GaussianLaw], times: &[f64]) -> Result<EntropyTrace> {
    check_lengths(laws.len(), times.len())?;
    let mut r = Vec::with_capacity(times.len());
    let mut terms = Vec::with_capacity(times.len());
    for (law, &s) in laws.iter().zip(times) {
        r.push(gaussian_kl(law, &spec.gibbs_gaussian(s)?)?);
        terms.push(brownian_rate_terms_gaussian(spec, law, s)?);
    }
    EntropyTrace::from_terms(times, r, &terms)
}

/// Brownian production-rate check on grid densities from the 1D solver.
pub fn production_rate_check_brownian_grid(spec: &DiffusionSpec, densities: &[GridDensity]) -> Result<EntropyTrace> {
    let times: Vec<f64> = densities.iter().map(|d| d.time).collect();
    let mut r = Vec::with_capacity(times.len());
    let mut terms = Vec::with_capacity(times.len());
    for d in densities {
        r.push(relative_entropy_grid(d, &spec.gibbs_grid(d.time, d.axes.clone())?)?);
        terms.push(fisher_and_rate_terms(d, spec, d.time)?);
    }
    EntropyTrace::from_terms(&times, r, &terms)
}

/// Langevin production-rate check on Gaussian phase-space laws.
pub fn production_rate_check_langevin(spec: &LangevinSpec, laws: &[GaussianLaw], times: &[f64]) -> Result<EntropyTrace> {
    check_lengths(laws.len(), times.len())?;
    let mut r = Vec::with_capacity(times.len());
    let mut terms = Vec::with_capacity(times.len());
    for (law, &s) in laws.iter().zip(times) {
        r.push(gaussian_kl(law, &spec.gibbs_gaussian(s)?)?);
        terms.push(langevin_rate_terms_gaussian(spec, law, s)?);
    }
    EntropyTrace::from_terms(times, r, &terms)
}

/// Langevin production-rate check on `(q, p)` grid densities.
pub fn production_rate_check_langevin_grid(spec: &LangevinSpec, densities: &[GridDensity]) -> Result<EntropyTrace> {
    let times: Vec<f64> = densities.iter().map(|d| d.time).collect();
    let mut r = Vec::with_capacity(times.len());
    let mut terms = Vec::with_capacity(times.len());
    for d in densities {
        r.push(relative_entropy_grid(d, &spec.gibbs_grid(d.time, d.axes[0], d.axes[1])?)?);
        terms.push(fisher_and_rate_terms_langevin(d, spec, d.time)?);
    }
    EntropyTrace::from_terms(&times, r, &terms)
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(invalid(format!("{a} laws for {b} times")));
    }
    Ok(())
}

/// Which hypothesis on `∂V/∂s` drives the Brownian decay bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftBound {
    /// `‖∂V/∂s‖∞ ≤ L₁(s)`.
    Bounded,
    /// `∂V/∂s` is `L₂(s)`-Lipschitz; the rate enters as `L₂/√κ`.
    Lipschitz,
}

/// Quadrature tolerance of the decay bounds.
pub const BOUND_TOLERANCE: f64 = 1e-10;

/// Squared Gronwall bound on `R(s)` for Brownian dynamics:
/// `√R(s) ≤ e^{−(γ⁻/β)∫₀ˢκ}√R(0) + (β/√2)∫₀ˢ ℓ(u) e^{−(γ⁻/β)∫ᵤˢκ} du`,
/// with `ℓ = L₁` or `ℓ = L₂/√κ`.
pub fn theorem1_bound(
    variant: DriftBound,
    profile: &dyn Fn(f64) -> f64,
    kappa: &dyn Fn(f64) -> f64,
    gamma_lower: f64,
    beta: f64,
    r0: f64,
    times: &[f64],
) -> Result<Vec<f64>> {
    if !(gamma_lower > 0.0 && beta > 0.0 && r0 >= 0.0) {
        return Err(invalid("gamma_lower and beta must be positive and R(0) nonnegative"));
    }
    if times.iter().any(|&s| s < 0.0) {
        return Err(invalid("bound times must be nonnegative"));
    }
    for &s in times {
        if !(kappa(s) > 0.0) || profile(s) < 0.0 {
            return Err(invalid(format!("need kappa > 0 and a nonnegative profile (s = {s})")));
        }
    }
    let rate = |u: f64| gamma_lower / beta * kappa(u);
    let cumulative = |s: f64| adaptive_simpson(&rate, 0.0, s, BOUND_TOLERANCE);
    let forcing = |u: f64| match variant {
        DriftBound::Bounded => profile(u),
        DriftBound::Lipschitz => profile(u) / sqrt(kappa(u)),
    };
    let sr0 = sqrt(r0);
    Ok(times
        .iter()
        .map(|&s| {
            if s == 0.0 {
                return r0;
            }
            let total = cumulative(s);
            let integrand = |u: f64| forcing(u) * exp(cumulative(u) - total);
            let root = exp(-total) * sr0 + beta / core::f64::consts::SQRT_2 * adaptive_simpson(&integrand, 0.0, s, BOUND_TOLERANCE);
            root * root
        })
        .collect())
}

/// `κ(s) = βκ₀(s)` with `κ₀` the smallest Hessian eigenvalue over the probe points.
pub fn bakry_emery_kappa(potential: &dyn Potential, dim: usize, beta: f64, s: f64, probes: &[Vec<f64>]) -> Result<f64> {
    if probes.is_empty() {
        return Err(invalid("no probe points"));
    }
    let mut h = vec![0.0; dim * dim];
    let mut kappa0 = f64::INFINITY;
    for x in probes {
        potential.hessian(x, s, &mut h);
        kappa0 = kappa0.min(symmetric_eigenvalues(&Mat::from_row_slice(dim, dim, &h))[0]);
    }
    if !(kappa0 > 0.0) {
        return Err(Error::NonConvex { kappa0 });
    }
    Ok(beta * kappa0)
}

/// Inputs and derived quantities of a hypocoercivity certificate; the
/// constructor enforces every constraint, so holding one means it is valid.
#[derive(Debug, Clone, PartialEq)]
pub struct HypocoercivityCertificate {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub xi: f64,
    pub beta: f64,
    /// Global bound on the Hessian of `V`.
    pub l: f64,
    /// `‖∂V/∂s‖∞`
    pub l1: f64,
    /// `‖∂∇V/∂s‖∞`
    pub l2: f64,
    /// LSI constant of the position marginal.
    pub kappa: f64,
    pub s: [[f64; 2]; 2],
    pub s_tilde: [[f64; 2]; 2],
    pub lambda: (f64, f64),
    pub lambda_tilde: (f64, f64),
    pub omega: f64,
}

fn violation(constraint: &'static str, detail: String) -> CertificateViolation {
    CertificateViolation { constraint, detail }
}

/// `S̃ = [[ξ(1/β + 2a) − 2b(1 + L), −(a + bξ + cL)], [−(a + bξ + cL), 2b − c]]`.
fn s_tilde(a: f64, b: f64, c: f64, xi: f64, beta: f64, l: f64) -> [[f64; 2]; 2] {
    let d = xi * (1.0 / beta + 2.0 * a) - 2.0 * b * (1.0 + l);
    let off = -(a + b * xi + c * l);
    [[d, off], [off, 2.0 * b - c]]
}

fn omega_from(lambda_tilde1: f64, lambda2: f64, kappa: f64, beta: f64) -> f64 {
    0.5 * lambda_tilde1 / (0.5 / kappa.min(beta) + lambda2)
}

/// Checks `2b > c`, `ac ≥ b²`, `S ⪰ 0`, `S̃ ≻ 0` and builds the certificate with
/// `ω = (λ̃₁/2)(1/(2 min{κ, β}) + λ₂)⁻¹`.
pub fn hypocoercivity_certificate(
    a: f64,
    b: f64,
    c: f64,
    xi: f64,
    beta: f64,
    l: f64,
    kappa: f64,
) -> core::result::Result<HypocoercivityCertificate, CertificateViolation> {
    for (name, v) in [("a", a), ("b", b), ("c", c), ("xi", xi), ("beta", beta), ("kappa", kappa)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(violation("positive inputs", format!("{name} = {v}")));
        }
    }
    if !(l >= 0.0 && l.is_finite()) {
        return Err(violation("L >= 0", format!("L = {l}")));
    }
    if 2.0 * b <= c {
        return Err(violation("2b > c", format!("2b = {}, c = {c}", 2.0 * b)));
    }
    if a * c < b * b {
        return Err(violation("ac >= b^2", format!("ac = {}, b^2 = {}", a * c, b * b)));
    }
    let lambda = sym2_eigenvalues(a, b, c);
    if lambda.0 < -1e-14 * lambda.1 {
        return Err(violation("S positive semidefinite", format!("lambda_1 = {}", lambda.0)));
    }
    let st = s_tilde(a, b, c, xi, beta, l);
    let lambda_tilde = sym2_eigenvalues(st[0][0], st[0][1], st[1][1]);
    if !(lambda_tilde.0 > 0.0) {
        return Err(violation("S~ positive definite", format!("lambda~_1 = {}", lambda_tilde.0)));
    }
    let omega = omega_from(lambda_tilde.0, lambda.1, kappa, beta);
    if !(omega > 0.0) {
        return Err(violation("omega > 0", format!("omega = {omega}")));
    }
    Ok(HypocoercivityCertificate {
        a,
        b,
        c,
        xi,
        beta,
        l,
        l1: 0.0,
        l2: 0.0,
        kappa,
        s: [[a, b], [b, c]],
        s_tilde: st,
        lambda,
        lambda_tilde,
        omega,
    })
}

impl HypocoercivityCertificate {
    /// Attach the bounds on `∂V/∂s` and `∂∇V/∂s`.
    pub fn with_drift_bounds(mut self, l1: f64, l2: f64) -> Result<Self> {
        if !(l1 >= 0.0 && l2 >= 0.0) {
            return Err(invalid("L1 and L2 must be nonnegative"));
        }
        self.l1 = l1;
        self.l2 = l2;
        Ok(self)
    }

    /// The same `(a, b, c, ξ, β, L)` with another LSI constant.
    pub fn with_kappa(&self, kappa: f64) -> core::result::Result<Self, CertificateViolation> {
        let (l1, l2) = (self.l1, self.l2);
        let mut cert = hypocoercivity_certificate(self.a, self.b, self.c, self.xi, self.beta, self.l, kappa)?;
        cert.l1 = l1;
        cert.l2 = l2;
        Ok(cert)
    }

    /// `β²L₁²/(2ω²) + (β²/ω)(c + b/2)L₂²`, the level the bound settles to.
    pub fn asymptote(&self) -> f64 {
        let (b2, w) = (self.beta * self.beta, self.omega);
        b2 * self.l1 * self.l1 / (2.0 * w * w) + b2 / w * (self.c + 0.5 * self.b) * self.l2 * self.l2
    }
}

/// `E(0)e^{−ωs} + β²L₁²/(2ω²) + (β²/ω)(c + b/2)L₂²` using the certificate's `L₁`, `L₂`.
pub fn theorem3_bound(cert: &HypocoercivityCertificate, e0: f64, times: &[f64]) -> Result<Vec<f64>> {
    if !(e0 >= 0.0) {
        return Err(invalid("E(0) must be nonnegative"));
    }
    let tail = cert.asymptote();
    Ok(times.iter().map(|&s| e0 * exp(-cert.omega * s) + tail).collect())
}

/// Convolution form with time-dependent `L₁(s)`, `L₂(s)`, `κ(s)`:
/// `e^{−∫₀ˢω}E(0) + (β²/2)∫L₁²/ω e^{−∫ᵤˢω} + β²(c + b/2)∫L₂² e^{−∫ᵤˢω}`.
pub fn theorem3_bound_time_dependent(
    cert: &HypocoercivityCertificate,
    l1: &dyn Fn(f64) -> f64,
    l2: &dyn Fn(f64) -> f64,
    kappa: &dyn Fn(f64) -> f64,
    e0: f64,
    times: &[f64],
) -> Result<Vec<f64>> {
    if !(e0 >= 0.0) {
        return Err(invalid("E(0) must be nonnegative"));
    }
    for &s in times {
        cert.with_kappa(kappa(s))?;
        if l1(s) < 0.0 || l2(s) < 0.0 {
            return Err(invalid(format!("negative drift bound at s = {s}")));
        }
    }
    let omega = |u: f64| omega_from(cert.lambda_tilde.0, cert.lambda.1, kappa(u), cert.beta);
    let cumulative = |s: f64| adaptive_simpson(&omega, 0.0, s, BOUND_TOLERANCE);
    let b2 = cert.beta * cert.beta;
    let weight = cert.c + 0.5 * cert.b;
    Ok(times
        .iter()
        .map(|&s| {
            if s == 0.0 {
                return e0;
            }
            let total = cumulative(s);
            let integrand = |u: f64| {
                let w = omega(u);
                let decay = exp(cumulative(u) - total);
                (0.5 * b2 * l1(u) * l1(u) / w + b2 * weight * l2(u) * l2(u)) * decay
            };
            exp(-total) * e0 + adaptive_simpson(&integrand, 0.0, s, BOUND_TOLERANCE)
        })
        .collect())
}

fn try_omega(a: f64, b: f64, c: f64, xi: f64, beta: f64, l: f64, kappa: f64) -> Option<f64> {
    hypocoercivity_certificate(a, b, c, xi, beta, l, kappa).ok().map(|c| c.omega)
}

/// Minimizes `f` by Nelder-Mead from `start` with initial edge `scale`.
fn nelder_mead(f: &dyn Fn(&[f64; 3]) -> f64, start: [f64; 3], scale: f64, iterations: usize) -> ([f64; 3], f64) {
    let mut simplex: Vec<([f64; 3], f64)> = (0..4)
        .map(|k| {
            let mut x = start;
            if k > 0 {
                x[k - 1] += scale;
            }
            (x, f(&x))
        })
        .collect();
    let comb = |a: &[f64; 3], b: &[f64; 3], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])];
    for _ in 0..iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[3].1 - simplex[0].1).abs() <= 1e-15 * simplex[0].1.abs() && simplex[3].1.is_finite() {
            break;
        }
        let mut centroid = [0.0; 3];
        for (x, _) in &simplex[..3] {
            for i in 0..3 {
                centroid[i] += x[i] / 3.0;
            }
        }
        let worst = simplex[3];
        let reflected = comb(&centroid, &worst.0, -1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = comb(&centroid, &worst.0, -2.0);
            let fe = f(&expanded);
            simplex[3] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 { comb(&centroid, &reflected, 0.5) } else { comb(&centroid, &worst.0, 0.5) };
            let fc = f(&contracted);
            if fc < worst.1.min(fr) {
                simplex[3] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    entry.0 = comb(&best, &entry.0, 0.5);
                    entry.1 = f(&entry.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Largest `ω` over feasible `(a, b, c)`: a 25³ logarithmic grid on
/// `[1e−6, 1e2]³`, then Nelder-Mead from the best five grid points.
pub fn optimize_omega(xi: f64, beta: f64, l: f64, kappa: f64) -> Result<HypocoercivityCertificate> {
    if !(xi > 0.0 && beta > 0.0 && kappa > 0.0 && l >= 0.0) {
        return Err(invalid("xi, beta, kappa must be positive and L nonnegative"));
    }
    const POINTS: usize = 25;
    let (lo, hi) = (ln(1e-6), ln(1e2));
    let node = |i: usize| exp(lo + (hi - lo) * i as f64 / (POINTS - 1) as f64);
    let mut feasible: Vec<(f64, [f64; 3])> = Vec::new();
    for i in 0..POINTS {
        for j in 0..POINTS {
            for k in 0..POINTS {
                let (a, b, c) = (node(i), node(j), node(k));
                if let Some(w) = try_omega(a, b, c, xi, beta, l, kappa) {
                    feasible.push((w, [a, b, c]));
                }
            }
        }
    }
    if feasible.is_empty() {
        return Err(Error::EmptyFeasibleSet);
    }
    feasible.sort_by(|x, y| y.0.total_cmp(&x.0));
    // coordinates: ln b, logit of c/(2b), ln(ac/b² − 1); only S̃ ≻ 0 remains a constraint
    let decode = |y: &[f64; 3]| {
        let b = exp(y[0].clamp(-60.0, 30.0));
        let c = 2.0 * b / (1.0 + exp(-y[1].clamp(-60.0, 60.0)));
        let a = b * b / c * (1.0 + exp(y[2].clamp(-60.0, 60.0)));
        (a, b, c)
    };
    let encode = |a: f64, b: f64, c: f64| {
        let t = c / (2.0 * b);
        [ln(b), ln(t / (1.0 - t)), ln((a * c / (b * b) - 1.0).max(1e-26))]
    };
    let objective = |y: &[f64; 3]| {
        let (a, b, c) = decode(y);
        try_omega(a, b, c, xi, beta, l, kappa).map_or(f64::INFINITY, |w| -w)
    };
    let mut best = feasible[0];
    for &(_, [a, b, c]) in feasible.iter().take(5) {
        let mut start = encode(a, b, c);
        for _ in 0..3 {
            let (y, v) = nelder_mead(&objective, start, 0.5, 2000);
            start = y;
            if -v > best.0 {
                let (a, b, c) = decode(&y);
                best = (-v, [a, b, c]);
            }
        }
    }
    let [a, b, c] = best.1;
    Ok(hypocoercivity_certificate(a, b, c, xi, beta, l, kappa)?)
}

/// Total variation (as the L¹ distance), KL, `W₂` and the two inequality bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityReport {
    pub tv: f64,
    pub kl: f64,
    /// `√(2 KL)`
    pub pinsker_bound: f64,
    /// `None` when no Wasserstein distance is available.
    pub w2: Option<f64>,
    /// `√(2 KL / κ)`
    pub talagrand_bound: f64,
    pub kappa: f64,
}

impl InequalityReport {
    pub fn pinsker_holds(&self, tol: f64) -> bool {
        self.tv <= self.pinsker_bound + tol
    }

    pub fn talagrand_holds(&self, tol: f64) -> bool {
        self.w2.is_none_or(|w| w <= self.talagrand_bound + tol)
    }

    /// `Err` naming the first failed inequality.
    pub fn check(&self, tol: f64) -> Result<()> {
        if !self.pinsker_holds(tol) {
            return Err(Error::InequalityViolated(format!("TV {} > sqrt(2 KL) {}", self.tv, self.pinsker_bound)));
        }
        if !self.talagrand_holds(tol) {
            return Err(Error::InequalityViolated(format!(
                "W2 {:?} > sqrt(2 KL / kappa) {}",
                self.w2, self.talagrand_bound
            )));
        }
        Ok(())
    }
}

/// LSI constant of a Gaussian: the smallest eigenvalue of its precision.
pub fn gaussian_lsi_constant(law: &GaussianLaw) -> f64 {
    let e = symmetric_eigenvalues(&law.cov);
    1.0 / e[e.len() - 1]
}

fn report(tv: f64, kl: f64, w2: Option<f64>, kappa: f64) -> Result<InequalityReport> {
    if !(kappa > 0.0) {
        return Err(invalid("kappa must be positive"));
    }
    Ok(InequalityReport { tv, kl, pinsker_bound: sqrt(2.0 * kl), w2, talagrand_bound: sqrt(2.0 * kl / kappa), kappa })
}

/// Closed-form report for Gaussians `P`, `Q`; `κ` is the LSI constant of `Q`.
pub fn pinsker_talagrand_report(p: &GaussianLaw, q: &GaussianLaw, kappa: f64) -> Result<InequalityReport> {
    report(gaussian_l1_distance(p, q)?, gaussian_kl(p, q)?, Some(wasserstein2(p, q)), kappa)
}

/// Grid report; `W₂` through quantile functions in one dimension.
pub fn pinsker_talagrand_report_grid(p: &GridDensity, q: &GridDensity, kappa: f64) -> Result<InequalityReport> {
    let w2 = if p.dim() == 1 { Some(wasserstein2_grid_1d(p, q)?) } else { None };
    report(p.l1_distance(q)?, relative_entropy_grid(p, q)?, w2, kappa)
}

/// `W₂` between piecewise-constant 1D densities on a common grid via
/// `∫₀¹ |F⁻¹(t) − G⁻¹(t)|² dt` over the merged CDF breakpoints.
pub fn wasserstein2_grid_1d(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    p.check_same_grid(q)?;
    if p.dim() != 1 {
        return Err(invalid("one-dimensional densities expected"));
    }
    let axis = p.axes[0];
    let h = axis.spacing();
    let (fp, fq) = (p.cumulative(), q.cumulative());
    // quantile of a piecewise-linear CDF at level t
    let quantile = |f: &[f64], t: f64| {
        let i = f.partition_point(|&v| v < t).min(f.len() - 1);
        let lo = if i == 0 { 0.0 } else { f[i - 1] };
        let frac = if f[i] > lo { (t - lo) / (f[i] - lo) } else { 0.5 };
        axis.min + (i as f64 + frac.clamp(0.0, 1.0)) * h
    };
    let mut levels: Vec<f64> = fp.iter().chain(&fq).copied().filter(|t| *t > 0.0 && *t < 1.0).collect();
    levels.push(0.0);
    levels.push(1.0);
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    // both quantiles are linear between merged breakpoints: integrate the square exactly
    let mut acc = 0.0;
    for w in levels.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let eps = 1e-15 * (t1 - t0);
        let d0 = quantile(&fp, t0 + eps) - quantile(&fq, t0 + eps);
        let d1 = quantile(&fp, t1 - eps) - quantile(&fq, t1 - eps);
        acc += (t1 - t0) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
    }
    Ok(sqrt(acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;
        use crate::model::{QuadraticPotential, Schedule, TanhPerturbedPotential};

    #[test]
    fn fd_is_exact_on_quartics() {
        let times: Vec<f64> = (0..11).map(|k| 0.1 * k as f64).collect();
        let f: Vec<f64> = times.iter().map(|t| t * t * t * t - 2.0 * t).collect();
        let d = fd_derivative(&times, &f).unwrap();
        for (t, v) in times.iter().zip(d) {
            assert!((v - (4.0 * t * t * t - 2.0)).abs() < 1e-11);
        }
    }

    #[test]
    fn certificate_worked_example() {
        let cert = hypocoercivity_certificate(0.05, 0.04, 0.05, 1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(cert.s_tilde, [[1.02, -0.09], [-0.09, 0.03]]);
        // (1.05 − √(0.99² + 4·0.0081))/2
        let l1 = 0.5 * (1.05 - sqrt(0.99 * 0.99 + 4.0 * 0.0081));
        assert!((cert.lambda_tilde.0 - l1).abs() < 1e-14);
        assert!((cert.lambda_tilde.0 - 0.02189).abs() < 1e-5);
        assert!((cert.lambda.1 - 0.09).abs() < 1e-15);
        assert!((cert.omega - 0.5 * l1 / 0.59).abs() < 1e-15);
        assert!((cert.omega - 0.01855).abs() < 1e-5);
        let s = hypocoercivity_certificate(1.0, 0.6, 1.0, 1.0, 1.0, 0.0, 1.0);
        assert_eq!(s.unwrap_err().constraint, "S~ positive definite");
        assert_eq!(sym2_eigenvalues(1.0, 0.5, 1.0), (0.5, 1.5));
    }

    #[test]
    fn certificate_rejections_name_the_constraint() {
        assert_eq!(hypocoercivity_certificate(1.0, 0.1, 0.3, 1.0, 1.0, 0.0, 1.0).unwrap_err().constraint, "2b > c");
        assert_eq!(hypocoercivity_certificate(0.01, 0.1, 0.1, 1.0, 1.0, 0.0, 1.0).unwrap_err().constraint, "ac >= b^2");
        assert_eq!(hypocoercivity_certificate(0.1, 0.1, 0.1, -1.0, 1.0, 0.0, 1.0).unwrap_err().constraint, "positive inputs");
    }

    #[test]
    fn optimized_omega_dominates_the_worked_example() {
        let cert = optimize_omega(1.0, 1.0, 0.0, 1.0).unwrap();
        assert!(cert.omega >= 0.01855);
        assert!(hypocoercivity_certificate(cert.a, cert.b, cert.c, 1.0, 1.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn theorem1_degenerate_cases() {
        let zero = |_: f64| 0.0;
        let kappa = |_: f64| 2.0;
        let times = [0.0, 0.5, 1.0];
        let b = theorem1_bound(DriftBound::Bounded, &zero, &kappa, 1.0, 1.0, 0.3, &times).unwrap();
        for (s, v) in times.iter().zip(&b) {
            assert!((v - 0.3 * exp(-4.0 * s)).abs() < 1e-10);
        }
        assert_eq!(b[0], 0.3);
        let (l1, beta, g, k) = (0.7, 2.0, 0.5, 1.5);
        let b = theorem1_bound(DriftBound::Bounded, &|_| l1, &|_| k, g, beta, 0.0, &[1.3]).unwrap();
        let root = (1.0 - exp(-g * k * 1.3 / beta)) * beta / (g * k);
        let exact = 0.5 * beta * beta * l1 * l1 * root * root;
        assert!((b[0] - exact).abs() < 1e-10);
    }

    #[test]
    fn bakry_emery_examples() {
        let probes = |r: f64, n: usize| (0..n).map(|i| vec![-r + 2.0 * r * i as f64 / (n - 1) as f64]).collect::<Vec<_>>();
        let quad = QuadraticPotential::new(1, Schedule::Constant(1.0));
        assert!((bakry_emery_kappa(&quad, 1, 2.0, 0.0, &probes(3.0, 11)).unwrap() - 2.0).abs() < 1e-14);
        let tanh_pot = TanhPerturbedPotential { dim: 1, amplitude: Schedule::Constant(0.5) };
        let k = bakry_emery_kappa(&tanh_pot, 1, 1.0, 0.0, &probes(4.0, 8001)).unwrap();
        assert!((k - (1.0 - 0.5 * 4.0 / (3.0 * sqrt(3.0)))).abs() < 1e-6);
        assert!((k - 0.6151).abs() < 1e-4);
        let double_well = crate::model::ClosurePotential::time_independent(
            |x| x[0].powi(4) - x[0] * x[0],
            |x, g| g[0] = 4.0 * x[0].powi(3) - 2.0 * x[0],
            |x, h| h[0] = 12.0 * x[0] * x[0] - 2.0,
        );
        assert!(matches!(bakry_emery_kappa(&double_well, 1, 1.0, 0.0, &probes(1.0, 11)), Err(Error::NonConvex { .. })));
    }

    #[test]
    fn theorem3_time_dependent_matches_convolution_closed_form() {
        let cert = hypocoercivity_certificate(0.05, 0.04, 0.05, 1.0, 1.0, 0.0, 1.0).unwrap().with_drift_bounds(0.2, 0.1).unwrap();
        let times = [0.0, 1.0, 5.0];
        let td = theorem3_bound_time_dependent(&cert, &|_| 0.2, &|_| 0.1, &|_| 1.0, 0.7, &times).unwrap();
        let constant = theorem3_bound(&cert, 0.7, &times).unwrap();
        let w = cert.omega;
        for (k, &s) in times.iter().enumerate() {
            let exact = 0.7 * exp(-w * s) + cert.asymptote() * (1.0 - exp(-w * s));
            assert!((td[k] - exact).abs() < 1e-8, "{} {}", td[k], exact);
            assert!(td[k] <= constant[k] + 1e-12);
        }
    }

    #[test]
    fn translation_saturates_talagrand() {
        let p = GaussianLaw::scalar(1.0, 1.0).unwrap();
        let q = GaussianLaw::scalar(0.0, 1.0).unwrap();
        let r = pinsker_talagrand_report(&p, &q, 1.0).unwrap();
        assert!((r.kl - 0.5).abs() < 1e-15);
        assert!((r.w2.unwrap() - r.talagrand_bound).abs() < 1e-12);
        r.check(0.0).unwrap();
        let same = pinsker_talagrand_report(&q, &q, 1.0).unwrap();
        assert_eq!((same.tv, same.kl), (0.0, 0.0));
    }

    #[test]
    fn grid_wasserstein_of_translated_gaussians() {
        let axis = Axis::new(-10.0, 11.0, 2100);
        let p = GridDensity::from_log_fn(vec![axis], 0.0, |x| -0.5 * (x[0] - 1.0) * (x[0] - 1.0)).unwrap();
        let q = GridDensity::from_log_fn(vec![axis], 0.0, |x| -0.5 * x[0] * x[0]).unwrap();
        assert!((wasserstein2_grid_1d(&p, &q).unwrap() - 1.0).abs() < 1e-3);
        pinsker_talagrand_report_grid(&p, &q, 1.0).unwrap().check(1e-3).unwrap();
    }

    #[test]
    fn omega_scales_linearly_in_small_and_inversely_in_large_friction() {
        let slope = |x0: f64, x1: f64| {
            let w0 = optimize_omega(x0, 1.0, 1.0, 1.0).unwrap().omega;
            let w1 = optimize_omega(x1, 1.0, 1.0, 1.0).unwrap().omega;
            (ln(w1) - ln(w0)) / (ln(x1) - ln(x0))
        };
        let (lo, hi) = (slope(1e-3, 1e-2), slope(1e2, 1e3));
        assert!((lo - 1.0).abs() <= 0.15, "{lo}");
        assert!((hi + 1.0).abs() <= 0.15, "{hi}");
    }
}

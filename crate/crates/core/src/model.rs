//! Problem definitions for Brownian and Langevin dynamics, their Gibbs
//! measures, partition functions and free energies.
//!
//! Potentials, circulation fields and noise coefficients are evaluator
//! bundles: every quantity a verification formula needs (values, time
//! derivatives, gradients, Hessians, divergences) is supplied analytically.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use alloc::{format, string::String};

use crate::error::{invalid, Error, Result};
use crate::gaussian::GaussianLaw;
use crate::grid::{Axis, GridDensity};
use crate::linalg::{min_eigenvalue, spd_inverse, Mat, Vector};
use crate::math::{abs, cos, exp, ln, sin, sqrt, tanh, PI};
use crate::quadrature::GaussLegendre;

/// A scalar function of time with its derivative.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant(f64),
    /// `offset + slope * s`
    Affine { offset: f64, slope: f64 },
    /// `offset + amplitude * sin(frequency * s)`
    Sine { offset: f64, amplitude: f64, frequency: f64 },
}

impl Schedule {
    /// Linear ramp from `start` at `s = 0` to `end` at `s = duration`.
    pub fn ramp(start: f64, end: f64, duration: f64) -> Self {
        Schedule::Affine { offset: start, slope: (end - start) / duration }
    }

    pub fn value(&self, s: f64) -> f64 {
        match *self {
            Schedule::Constant(c) => c,
            Schedule::Affine { offset, slope } => offset + slope * s,
            Schedule::Sine { offset, amplitude, frequency } => offset + amplitude * sin(frequency * s),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match *self {
            Schedule::Constant(_) => 0.0,
            Schedule::Affine { slope, .. } => slope,
            Schedule::Sine { amplitude, frequency, .. } => amplitude * frequency * cos(frequency * s),
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            Schedule::Constant(_) => true,
            Schedule::Affine { slope, .. } => slope == 0.0,
            Schedule::Sine { amplitude, frequency, .. } => amplitude == 0.0 || frequency == 0.0,
        }
    }
}

/// `V(x, s) = ½ (x − μ)ᵀ K (x − μ) + offset` together with the time
/// derivatives of `K`, `μ` and the offset.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub stiffness: Mat,
    pub center: Vector,
    pub offset: f64,
    pub stiffness_rate: Mat,
    pub center_rate: Vector,
    pub offset_rate: f64,
}

impl QuadraticForm {
    /// Coefficients `(Q, q, q₀)` of `∂V/∂s = xᵀQx + q·x + q₀`.
    pub fn time_derivative_coefficients(&self) -> (Mat, Vector, f64) {
        let k = &self.stiffness;
        let kr = &self.stiffness_rate;
        let mu = &self.center;
        let mur = &self.center_rate;
        let quad = kr * 0.5;
        let lin = -(kr * mu) - k * mur;
        let c = 0.5 * mu.dot(&(kr * mu)) + mur.dot(&(k * mu)) + self.offset_rate;
        (quad, lin, c)
    }
}

/// A time-dependent potential `V(x, s)` on `ℝⁿ`.
pub trait Potential: Send + Sync {
    fn value(&self, x: &[f64], s: f64) -> f64;
    /// `∂V/∂s`
    fn time_derivative(&self, x: &[f64], s: f64) -> f64;
    fn gradient(&self, x: &[f64], s: f64, out: &mut [f64]);
    /// Row-major `n × n` Hessian.
    fn hessian(&self, x: &[f64], s: f64, out: &mut [f64]);
    /// `∂(∇V)/∂s`
    fn gradient_time_derivative(&self, x: &[f64], s: f64, out: &mut [f64]);

    /// Closed-form quadratic representation, if the potential is quadratic at `s`.
    fn quadratic(&self, _s: f64) -> Option<QuadraticForm> {
        None
    }

    /// True when `∂V/∂s ≡ 0`.
    fn is_time_independent(&self) -> bool {
        false
    }
}

/// Isotropic quadratic `k(s)/2 |x − μ(s)|²`; covers both the stiffness family
/// `k(s)x²/2` and the translated family `(x − μ(s))²/2`.
#[derive(Debug, Clone)]
pub struct QuadraticPotential {
    pub stiffness: Schedule,
    pub center: Vec<Schedule>,
}

impl QuadraticPotential {
    pub fn new(dim: usize, stiffness: Schedule) -> Self {
        Self { stiffness, center: vec![Schedule::Constant(0.0); dim] }
    }

    pub fn translated(center: Vec<Schedule>) -> Self {
        Self { stiffness: Schedule::Constant(1.0), center }
    }

    pub fn with_center(mut self, center: Vec<Schedule>) -> Self {
        self.center = center;
        self
    }
}

impl Potential for QuadraticPotential {
    fn value(&self, x: &[f64], s: f64) -> f64 {
        let k = self.stiffness.value(s);
        0.5 * k * x.iter().zip(&self.center).map(|(xi, c)| (xi - c.value(s)) * (xi - c.value(s))).sum::<f64>()
    }

    fn time_derivative(&self, x: &[f64], s: f64) -> f64 {
        let k = self.stiffness.value(s);
        let dk = self.stiffness.derivative(s);
        x.iter()
            .zip(&self.center)
            .map(|(xi, c)| {
                let d = xi - c.value(s);
                0.5 * dk * d * d - k * d * c.derivative(s)
            })
            .sum()
    }

    fn gradient(&self, x: &[f64], s: f64, out: &mut [f64]) {
        let k = self.stiffness.value(s);
        for ((o, xi), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = k * (xi - c.value(s));
        }
    }

    fn hessian(&self, x: &[f64], s: f64, out: &mut [f64]) {
        let n = x.len();
        let k = self.stiffness.value(s);
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            out[i * n + i] = k;
        }
    }

    fn gradient_time_derivative(&self, x: &[f64], s: f64, out: &mut [f64]) {
        let k = self.stiffness.value(s);
        let dk = self.stiffness.derivative(s);
        for ((o, xi), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = dk * (xi - c.value(s)) - k * c.derivative(s);
        }
    }

    fn quadratic(&self, s: f64) -> Option<QuadraticForm> {
        let n = self.center.len();
        Some(QuadraticForm {
            stiffness: Mat::identity(n, n) * self.stiffness.value(s),
            center: Vector::from_iterator(n, self.center.iter().map(|c| c.value(s))),
            offset: 0.0,
            stiffness_rate: Mat::identity(n, n) * self.stiffness.derivative(s),
            center_rate: Vector::from_iterator(n, self.center.iter().map(|c| c.derivative(s))),
            offset_rate: 0.0,
        })
    }

    fn is_time_independent(&self) -> bool {
        self.stiffness.is_constant() && self.center.iter().all(Schedule::is_constant)
    }
}

/// Bounded perturbation of the unit quadratic: `|x|²/2 + a(s) Σᵢ tanh(xᵢ)`.
#[derive(Debug, Clone)]
pub struct TanhPerturbedPotential {
    pub dim: usize,
    pub amplitude: Schedule,
}

impl Potential for TanhPerturbedPotential {
    fn value(&self, x: &[f64], s: f64) -> f64 {
        let a = self.amplitude.value(s);
        x.iter().map(|&xi| 0.5 * xi * xi + a * tanh(xi)).sum()
    }

    fn time_derivative(&self, x: &[f64], s: f64) -> f64 {
        let da = self.amplitude.derivative(s);
        x.iter().map(|&xi| da * tanh(xi)).sum()
    }

    fn gradient(&self, x: &[f64], s: f64, out: &mut [f64]) {
        let a = self.amplitude.value(s);
        for (o, &xi) in out.iter_mut().zip(x) {
            let t = tanh(xi);
            *o = xi + a * (1.0 - t * t);
        }
    }

    fn hessian(&self, x: &[f64], s: f64, out: &mut [f64]) {
        let n = x.len();
        let a = self.amplitude.value(s);
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let t = tanh(x[i]);
            out[i * n + i] = 1.0 - 2.0 * a * t * (1.0 - t * t);
        }
    }

    fn gradient_time_derivative(&self, x: &[f64], s: f64, out: &mut [f64]) {
        let da = self.amplitude.derivative(s);
        for (o, &xi) in out.iter_mut().zip(x) {
            let t = tanh(xi);
            *o = da * (1.0 - t * t);
        }
    }

    fn quadratic(&self, s: f64) -> Option<QuadraticForm> {
        if self.amplitude.value(s) != 0.0 || self.amplitude.derivative(s) != 0.0 {
            return None;
        }
        let n = self.dim;
        Some(QuadraticForm {
            stiffness: Mat::identity(n, n),
            center: Vector::zeros(n),
            offset: 0.0,
            stiffness_rate: Mat::zeros(n, n),
            center_rate: Vector::zeros(n),
            offset_rate: 0.0,
        })
    }

    fn is_time_independent(&self) -> bool {
        self.amplitude.is_constant()
    }
}

type ScalarFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;

/// A potential assembled from user closures.
pub struct ClosurePotential {
    pub value: Arc<ScalarFn>,
    pub time_derivative: Arc<ScalarFn>,
    pub gradient: Arc<VectorFn>,
    pub hessian: Arc<VectorFn>,
    pub gradient_time_derivative: Arc<VectorFn>,
    pub time_independent: bool,
}

impl ClosurePotential {
    /// A time-independent potential; time derivatives are identically zero.
    pub fn time_independent(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        hessian: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(move |x, _| value(x)),
            time_derivative: Arc::new(|_, _| 0.0),
            gradient: Arc::new(move |x, _, out| gradient(x, out)),
            hessian: Arc::new(move |x, _, out| hessian(x, out)),
            gradient_time_derivative: Arc::new(|_, _, out| out.iter_mut().for_each(|v| *v = 0.0)),
            time_independent: true,
        }
    }
}

impl Potential for ClosurePotential {
    fn value(&self, x: &[f64], s: f64) -> f64 {
        (self.value)(x, s)
    }
    fn time_derivative(&self, x: &[f64], s: f64) -> f64 {
        (self.time_derivative)(x, s)
    }
    fn gradient(&self, x: &[f64], s: f64, out: &mut [f64]) {
        (self.gradient)(x, s, out)
    }
    fn hessian(&self, x: &[f64], s: f64, out: &mut [f64]) {
        (self.hessian)(x, s, out)
    }
    fn gradient_time_derivative(&self, x: &[f64], s: f64, out: &mut [f64]) {
        (self.gradient_time_derivative)(x, s, out)
    }
    fn is_time_independent(&self) -> bool {
        self.time_independent
    }
}

/// Circulation field `J(x, s)`.
pub trait Circulation: Send + Sync {
    fn value(&self, x: &[f64], s: f64, out: &mut [f64]);
    fn divergence(&self, x: &[f64], s: f64) -> f64;
    /// `J(x, s) = R(s) x` if the field is linear.
    fn linear(&self, _s: f64) -> Option<Mat> {
        None
    }
    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroCirculation;

impl Circulation for ZeroCirculation {
    fn value(&self, _x: &[f64], _s: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    fn divergence(&self, _x: &[f64], _s: f64) -> f64 {
        0.0
    }
    fn linear(&self, _s: f64) -> Option<Mat> {
        None
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// `J(x, s) = c(s) R x` for a fixed matrix `R` and scale schedule `c`.
#[derive(Debug, Clone)]
pub struct LinearCirculation {
    pub matrix: Mat,
    pub scale: Schedule,
}

impl LinearCirculation {
    pub fn new(matrix: Mat) -> Self {
        Self { matrix, scale: Schedule::Constant(1.0) }
    }

    /// Planar rotation `J(x) = ω (−x₂, x₁)`.
    pub fn rotation(omega: f64) -> Self {
        Self::new(Mat::from_row_slice(2, 2, &[0.0, -omega, omega, 0.0]))
    }
}

impl Circulation for LinearCirculation {
    fn value(&self, x: &[f64], s: f64, out: &mut [f64]) {
        let c = self.scale.value(s);
        let n = x.len();
        for (i, o) in out.iter_mut().enumerate() {
            *o = c * (0..n).map(|j| self.matrix[(i, j)] * x[j]).sum::<f64>();
        }
    }
    fn divergence(&self, _x: &[f64], s: f64) -> f64 {
        self.scale.value(s) * self.matrix.trace()
    }
    fn linear(&self, s: f64) -> Option<Mat> {
        Some(&self.matrix * self.scale.value(s))
    }
}

/// Noise coefficient `σ(x, s) ∈ ℝⁿˣᵐ`, with `γ = σσᵀ`.
pub trait Noise: Send + Sync {
    fn noise_dim(&self) -> usize;
    /// Row-major `n × m`.
    fn sigma(&self, x: &[f64], s: f64, out: &mut [f64]);
    /// Row-major `n × n`.
    fn gamma(&self, x: &[f64], s: f64, out: &mut [f64]);
    /// `(∇·γ)ᵢ = Σⱼ ∂γᵢⱼ/∂xⱼ`
    fn divergence_gamma(&self, x: &[f64], s: f64, out: &mut [f64]);
    /// `σ(s)` when it does not depend on `x`.
    fn constant(&self, _s: f64) -> Option<Mat> {
        None
    }
}

/// `σ(s) = c(s) Iₙ`.
#[derive(Debug, Clone)]
pub struct ScalarNoise {
    pub dim: usize,
    pub scale: Schedule,
}

impl ScalarNoise {
    pub fn identity(dim: usize) -> Self {
        Self { dim, scale: Schedule::Constant(1.0) }
    }
}

impl Noise for ScalarNoise {
    fn noise_dim(&self) -> usize {
        self.dim
    }
    fn sigma(&self, _x: &[f64], s: f64, out: &mut [f64]) {
        let c = self.scale.value(s);
        diag_into(self.dim, c, out);
    }
    fn gamma(&self, _x: &[f64], s: f64, out: &mut [f64]) {
        let c = self.scale.value(s);
        diag_into(self.dim, c * c, out);
    }
    fn divergence_gamma(&self, _x: &[f64], _s: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    fn constant(&self, s: f64) -> Option<Mat> {
        Some(Mat::identity(self.dim, self.dim) * self.scale.value(s))
    }
}

/// Constant `σ ∈ ℝⁿˣᵐ`.
#[derive(Debug, Clone)]
pub struct MatrixNoise {
    pub sigma: Mat,
}

impl Noise for MatrixNoise {
    fn noise_dim(&self) -> usize {
        self.sigma.ncols()
    }
    fn sigma(&self, _x: &[f64], _s: f64, out: &mut [f64]) {
        let (n, m) = self.sigma.shape();
        for i in 0..n {
            for j in 0..m {
                out[i * m + j] = self.sigma[(i, j)];
            }
        }
    }
    fn gamma(&self, _x: &[f64], _s: f64, out: &mut [f64]) {
        let g = &self.sigma * self.sigma.transpose();
        let n = g.nrows();
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = g[(i, j)];
            }
        }
    }
    fn divergence_gamma(&self, _x: &[f64], _s: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    fn constant(&self, _s: f64) -> Option<Mat> {
        Some(self.sigma.clone())
    }
}

fn diag_into(n: usize, c: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        out[i * n + i] = c;
    }
}

/// Brownian dynamics
/// `dx = (J − γ∇V + β⁻¹∇·γ)(x, s) ds + √(2β⁻¹) σ(x, s) dw` on `[0, T]`.
#[derive(Clone)]
pub struct DiffusionSpec {
    pub dim: usize,
    pub potential: Arc<dyn Potential>,
    pub circulation: Arc<dyn Circulation>,
    pub noise: Arc<dyn Noise>,
    pub beta: f64,
    pub horizon: f64,
    /// Declared ellipticity constant `γ⁻`.
    pub gamma_lower: f64,
}

impl core::fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("dim", &self.dim)
            .field("beta", &self.beta)
            .field("horizon", &self.horizon)
            .field("gamma_lower", &self.gamma_lower)
            .finish_non_exhaustive()
    }
}

impl DiffusionSpec {
    /// Spec with `J ≡ 0`, `σ = Iₙ` and `γ⁻ = 1`.
    pub fn new(dim: usize, potential: Arc<dyn Potential>, beta: f64, horizon: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(invalid(format!("beta must be positive, got {beta}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            dim,
            potential,
            circulation: Arc::new(ZeroCirculation),
            noise: Arc::new(ScalarNoise::identity(dim)),
            beta,
            horizon,
            gamma_lower: 1.0,
        })
    }

    pub fn with_circulation(mut self, circulation: Arc<dyn Circulation>) -> Self {
        self.circulation = circulation;
        self
    }

    pub fn with_noise(mut self, noise: Arc<dyn Noise>, gamma_lower: f64) -> Result<Self> {
        if noise.noise_dim() < self.dim {
            return Err(invalid(format!(
                "noise dimension m = {} is smaller than n = {}",
                noise.noise_dim(),
                self.dim
            )));
        }
        if !(gamma_lower > 0.0) {
            return Err(invalid("gamma_lower must be positive"));
        }
        self.noise = noise;
        self.gamma_lower = gamma_lower;
        Ok(self)
    }

    pub fn noise_dim(&self) -> usize {
        self.noise.noise_dim()
    }

    /// `−γ∇V + β⁻¹∇·γ`, the part of the drift shared by the forward and
    /// reverse processes.
    pub fn gradient_drift(&self, x: &[f64], s: f64, out: &mut [f64]) {
        let n = self.dim;
        let mut grad = [0.0; 4];
        let mut gamma = [0.0; 16];
        let mut div = [0.0; 4];
        if n <= 4 {
            self.gradient_drift_with(x, s, out, &mut grad[..n], &mut gamma[..n * n], &mut div[..n]);
        } else {
            let mut grad = vec![0.0; n];
            let mut gamma = vec![0.0; n * n];
            let mut div = vec![0.0; n];
            self.gradient_drift_with(x, s, out, &mut grad, &mut gamma, &mut div);
        }
    }

    fn gradient_drift_with(
        &self,
        x: &[f64],
        s: f64,
        out: &mut [f64],
        grad: &mut [f64],
        gamma: &mut [f64],
        div: &mut [f64],
    ) {
        let n = self.dim;
        self.potential.gradient(x, s, grad);
        self.noise.gamma(x, s, gamma);
        self.noise.divergence_gamma(x, s, div);
        for i in 0..n {
            let g: f64 = (0..n).map(|j| gamma[i * n + j] * grad[j]).sum();
            out[i] = -g + div[i] / self.beta;
        }
    }

    /// Forward drift `b(x, s) = J − γ∇V + β⁻¹∇·γ`.
    pub fn drift(&self, x: &[f64], s: f64, out: &mut [f64]) {
        self.gradient_drift(x, s, out);
        if !self.circulation.is_zero() {
            let mut j = vec![0.0; self.dim];
            self.circulation.value(x, s, &mut j);
            out.iter_mut().zip(&j).for_each(|(o, ji)| *o += ji);
        }
    }

    /// Drift of the reverse process at time `s`: `(−J − γ∇V + β⁻¹∇·γ)(x, T − s)`.
    pub fn reverse_drift(&self, x: &[f64], s: f64, out: &mut [f64]) {
        let t = self.horizon - s;
        self.gradient_drift(x, t, out);
        if !self.circulation.is_zero() {
            let mut j = vec![0.0; self.dim];
            self.circulation.value(x, t, &mut j);
            out.iter_mut().zip(&j).for_each(|(o, ji)| *o -= ji);
        }
    }

    pub fn is_time_independent(&self) -> bool {
        self.potential.is_time_independent()
    }

    /// `γ(s)` if the noise coefficient does not depend on `x`.
    pub fn constant_gamma(&self, s: f64) -> Option<Mat> {
        self.noise.constant(s).map(|sig| &sig * sig.transpose())
    }
}

/// Langevin dynamics with separable Hamiltonian `H = V(q, s) + pᵀM⁻¹p/2`
/// and friction `ξ` (noise `σ = √ξ Iₙ`, `γ = ξ Iₙ`):
///
/// `dq = M⁻¹p ds`, `dp = −∇V ds − ξM⁻¹p ds + √(2ξ/β) dw`.
#[derive(Clone)]
pub struct LangevinSpec {
    pub dim: usize,
    pub potential: Arc<dyn Potential>,
    pub mass: Mat,
    pub mass_inverse: Mat,
    pub friction: f64,
    pub beta: f64,
    pub horizon: f64,
}

impl core::fmt::Debug for LangevinSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("LangevinSpec")
            .field("dim", &self.dim)
            .field("mass", &self.mass)
            .field("friction", &self.friction)
            .field("beta", &self.beta)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl LangevinSpec {
    /// Unit-mass spec (`H = V + |p|²/2`).
    pub fn new(dim: usize, potential: Arc<dyn Potential>, friction: f64, beta: f64, horizon: f64) -> Result<Self> {
        Self::with_mass(dim, potential, Mat::identity(dim, dim), friction, beta, horizon)
    }

    pub fn with_mass(
        dim: usize,
        potential: Arc<dyn Potential>,
        mass: Mat,
        friction: f64,
        beta: f64,
        horizon: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if mass.shape() != (dim, dim) || !crate::linalg::is_symmetric(&mass, 1e-12) {
            return Err(invalid("mass matrix must be symmetric n x n"));
        }
        let mass_inverse = spd_inverse(&mass)?;
        if !(friction > 0.0) || !(beta > 0.0) || !(horizon > 0.0) {
            return Err(invalid(format!(
                "friction, beta and horizon must be positive (got {friction}, {beta}, {horizon})"
            )));
        }
        Ok(Self { dim, potential, mass, mass_inverse, friction, beta, horizon })
    }

    /// Phase-space dimension `2n`.
    pub fn state_dim(&self) -> usize {
        2 * self.dim
    }

    pub fn kinetic(&self, p: &[f64]) -> f64 {
        let n = self.dim;
        let mut e = 0.0;
        for i in 0..n {
            for j in 0..n {
                e += p[i] * self.mass_inverse[(i, j)] * p[j];
            }
        }
        0.5 * e
    }

    pub fn hamiltonian(&self, z: &[f64], s: f64) -> f64 {
        let (q, p) = z.split_at(self.dim);
        self.potential.value(q, s) + self.kinetic(p)
    }

    /// `∂H/∂s = ∂V/∂s`.
    pub fn hamiltonian_time_derivative(&self, z: &[f64], s: f64) -> f64 {
        self.potential.time_derivative(&z[..self.dim], s)
    }

    /// `M⁻¹p`
    pub fn velocity(&self, p: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for (i, o) in out.iter_mut().enumerate().take(n) {
            *o = (0..n).map(|j| self.mass_inverse[(i, j)] * p[j]).sum();
        }
    }

    /// Hamiltonian part of the forward drift: `(M⁻¹p, −∇V(q, s))`.
    pub fn hamiltonian_drift(&self, z: &[f64], s: f64, out: &mut [f64]) {
        let n = self.dim;
        let (q, p) = z.split_at(n);
        let (oq, op) = out.split_at_mut(n);
        self.velocity(p, oq);
        self.potential.gradient(q, s, op);
        op.iter_mut().for_each(|v| *v = -*v);
    }

    /// Forward drift `(M⁻¹p, −∇V − ξM⁻¹p)`.
    pub fn drift(&self, z: &[f64], s: f64, out: &mut [f64]) {
        self.hamiltonian_drift(z, s, out);
        let n = self.dim;
        for i in 0..n {
            out[n + i] -= self.friction * out[i];
        }
    }

    /// Reverse drift at time `s`: Hamiltonian part sign-flipped and evaluated
    /// at `T − s`, friction unchanged.
    pub fn reverse_drift(&self, z: &[f64], s: f64, out: &mut [f64]) {
        let n = self.dim;
        self.hamiltonian_drift(z, self.horizon - s, out);
        out.iter_mut().for_each(|v| *v = -*v);
        // out[..n] is now −M⁻¹p
        for i in 0..n {
            out[n + i] += self.friction * out[i];
        }
    }

    /// Noise amplitude on each momentum component: `√(2ξ/β)`.
    pub fn noise_amplitude(&self) -> f64 {
        sqrt(2.0 * self.friction / self.beta)
    }

    pub fn is_time_independent(&self) -> bool {
        self.potential.is_time_independent()
    }
}

/// Probe points and times for pointwise structural checks.
#[derive(Debug, Clone)]
pub struct ProbeGrid {
    pub points: Vec<Vec<f64>>,
    pub times: Vec<f64>,
}

impl ProbeGrid {
    /// Tensor grid `[-radius, radius]ⁿ` with `per_axis` points per axis.
    pub fn uniform(dim: usize, radius: f64, per_axis: usize, times: Vec<f64>) -> Self {
        let axis: Vec<f64> = (0..per_axis)
            .map(|i| {
                if per_axis == 1 {
                    0.0
                } else {
                    -radius + 2.0 * radius * i as f64 / (per_axis - 1) as f64
                }
            })
            .collect();
        let mut points = vec![Vec::new()];
        for _ in 0..dim {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&a| {
                        let mut q = p.clone();
                        q.push(a);
                        q
                    })
                })
                .collect();
        }
        Self { points, times }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub point: Vec<f64>,
    pub time: f64,
    /// `|div(J e^{−βV})|`
    pub divergence_residual: f64,
    /// Smallest eigenvalue of `γ(x, s)`.
    pub min_gamma_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub probes: Vec<ProbeResult>,
    pub max_residual: f64,
    pub min_eigenvalue: f64,
    pub tolerance: f64,
    pub gamma_lower: f64,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.max_residual > self.tolerance {
            out.push(format!(
                "div(J exp(-beta V)) residual {:.3e} exceeds tolerance {:.1e}",
                self.max_residual, self.tolerance
            ));
        }
        if self.min_eigenvalue < self.gamma_lower {
            out.push(format!(
                "min eigenvalue of gamma {:.6} is below gamma_lower {:.6}",
                self.min_eigenvalue, self.gamma_lower
            ));
        }
        out
    }
}

/// Pointwise check of `div(J e^{−βV}) = 0` and of the ellipticity bound
/// `vᵀγv ≥ γ⁻|v|²` on a probe grid.
pub fn validate_spec(spec: &DiffusionSpec, probes: &ProbeGrid, tol: f64) -> Result<ValidationReport> {
    if probes.points.is_empty() || probes.times.is_empty() {
        return Err(invalid("probe grid is empty"));
    }
    let n = spec.dim;
    let mut j = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut gamma = vec![0.0; n * n];
    let mut results = Vec::with_capacity(probes.points.len() * probes.times.len());
    for &s in &probes.times {
        for x in &probes.points {
            if x.len() != n {
                return Err(invalid(format!("probe point {x:?} has wrong dimension")));
            }
            let v = spec.potential.value(x, s);
            spec.potential.gradient(x, s, &mut grad);
            spec.circulation.value(x, s, &mut j);
            let div = spec.circulation.divergence(x, s);
            spec.noise.gamma(x, s, &mut gamma);
            let finite = v.is_finite()
                && div.is_finite()
                && grad.iter().chain(&j).chain(&gamma).all(|g| g.is_finite());
            if !finite {
                return Err(Error::Evaluator {
                    point: x.clone(),
                    time: s,
                    what: String::from("non-finite evaluator output"),
                });
            }
            let residual = abs(exp(-spec.beta * v) * (div - spec.beta * crate::math::dot(&j, &grad)));
            let eig = min_eigenvalue(&Mat::from_row_slice(n, n, &gamma));
            results.push(ProbeResult { point: x.clone(), time: s, divergence_residual: residual, min_gamma_eigenvalue: eig });
        }
    }
    let max_residual = results.iter().map(|r| r.divergence_residual).fold(0.0, f64::max);
    let min_eigenvalue = results.iter().map(|r| r.min_gamma_eigenvalue).fold(f64::INFINITY, f64::min);
    Ok(ValidationReport {
        probes: results,
        max_residual,
        min_eigenvalue,
        tolerance: tol,
        gamma_lower: spec.gamma_lower,
        // small slack so a declared γ⁻ equal to the exact eigenvalue passes
        passed: max_residual <= tol && min_eigenvalue >= spec.gamma_lower * (1.0 - 1e-12),
    })
}

/// Gibbs normalizer and free energy at a time `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsSnapshot {
    pub time: f64,
    pub normalizer: f64,
    pub free_energy: f64,
    pub quadrature_error: f64,
}

impl GibbsSnapshot {
    fn new(time: f64, normalizer: f64, beta: f64, quadrature_error: f64) -> Self {
        Self { time, normalizer, free_energy: -ln(normalizer) / beta, quadrature_error }
    }
}

/// Composite Gauss-Legendre on the box `center ± half_width` in each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureConfig {
    pub center: Vec<f64>,
    pub half_width: f64,
    pub panels: usize,
    pub order: usize,
    /// Largest tolerated fraction of mass in the outermost panels.
    pub boundary_threshold: f64,
}

impl QuadratureConfig {
    /// Box of 8 standard deviations of the Gaussian envelope of `e^{−βV(·, s)}`.
    pub fn gaussian_envelope(potential: &dyn Potential, dim: usize, beta: f64, s: f64) -> Self {
        let (center, curvature) = match potential.quadratic(s) {
            Some(q) => (q.center.iter().copied().collect::<Vec<_>>(), min_eigenvalue(&q.stiffness)),
            None => {
                let c = vec![0.0; dim];
                let mut h = vec![0.0; dim * dim];
                potential.hessian(&c, s, &mut h);
                (c, min_eigenvalue(&Mat::from_row_slice(dim, dim, &h)))
            }
        };
        let std = if curvature > 0.0 { 1.0 / sqrt(beta * curvature) } else { 1.0 / sqrt(beta) };
        Self { center, half_width: 8.0 * std, panels: 32, order: 8, boundary_threshold: 1e-10 }
    }
}

fn gibbs_integral(
    potential: &dyn Potential,
    dim: usize,
    beta: f64,
    s: f64,
    cfg: &QuadratureConfig,
    panels: usize,
) -> Result<(f64, f64)> {
    let gl = GaussLegendre::new(cfg.order);
    let per_panel = cfg.order;
    let axes: Vec<(Vec<f64>, Vec<f64>)> = cfg
        .center
        .iter()
        .map(|&c| gl.composite(c - cfg.half_width, c + cfg.half_width, panels))
        .collect();
    let outer = |idx: usize, len: usize| idx < per_panel || idx >= len - per_panel;
    let mut total = 0.0;
    let mut boundary = 0.0;
    let mut x = vec![0.0; dim];
    match dim {
        1 => {
            let (xs, ws) = &axes[0];
            for (i, (&xi, &wi)) in xs.iter().zip(ws).enumerate() {
                x[0] = xi;
                let f = exp(-beta * potential.value(&x, s));
                if !f.is_finite() {
                    return Err(Error::NonFiniteIntegrand { point: x.clone() });
                }
                total += wi * f;
                if outer(i, xs.len()) {
                    boundary += wi * f;
                }
            }
        }
        2 => {
            let (xs, wxs) = &axes[0];
            let (ys, wys) = &axes[1];
            for (i, (&xi, &wi)) in xs.iter().zip(wxs).enumerate() {
                for (j, (&yj, &wj)) in ys.iter().zip(wys).enumerate() {
                    x[0] = xi;
                    x[1] = yj;
                    let f = exp(-beta * potential.value(&x, s));
                    if !f.is_finite() {
                        return Err(Error::NonFiniteIntegrand { point: x.clone() });
                    }
                    total += wi * wj * f;
                    if outer(i, xs.len()) || outer(j, ys.len()) {
                        boundary += wi * wj * f;
                    }
                }
            }
        }
        _ => return Err(Error::Unsupported(format!("quadrature in dimension {dim} (only n <= 2)"))),
    }
    Ok((total, boundary))
}

/// `Z(s) = ∫ e^{−βV(x, s)} dx` by composite Gauss-Legendre, with `F = −β⁻¹ ln Z`.
/// The error estimate compares against the rule with half as many panels.
pub fn partition_function(
    potential: &dyn Potential,
    dim: usize,
    beta: f64,
    s: f64,
    cfg: &QuadratureConfig,
) -> Result<GibbsSnapshot> {
    if cfg.center.len() != dim {
        return Err(invalid("quadrature center has wrong dimension"));
    }
    let (z, boundary) = gibbs_integral(potential, dim, beta, s, cfg, cfg.panels)?;
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::NonFiniteIntegrand { point: cfg.center.clone() });
    }
    let fraction = boundary / z;
    if fraction > cfg.boundary_threshold {
        return Err(Error::DomainTooSmall { fraction, threshold: cfg.boundary_threshold });
    }
    let (z_coarse, _) = gibbs_integral(potential, dim, beta, s, cfg, (cfg.panels / 2).max(1))?;
    Ok(GibbsSnapshot::new(s, z, beta, abs(z - z_coarse)))
}

impl DiffusionSpec {
    pub fn partition_function(&self, s: f64, cfg: &QuadratureConfig) -> Result<GibbsSnapshot> {
        partition_function(self.potential.as_ref(), self.dim, self.beta, s, cfg)
    }

    pub fn default_quadrature(&self, s: f64) -> QuadratureConfig {
        QuadratureConfig::gaussian_envelope(self.potential.as_ref(), self.dim, self.beta, s)
    }

    /// `Z(s)` in closed form for a quadratic potential.
    pub fn gaussian_partition_function(&self, s: f64) -> Result<GibbsSnapshot> {
        gaussian_partition(self.potential.as_ref(), self.beta, s)
    }

    /// `ν_s^∞` as a Gaussian law; errors for non-quadratic potentials.
    pub fn gibbs_gaussian(&self, s: f64) -> Result<GaussianLaw> {
        gibbs_gaussian(self.potential.as_ref(), self.beta, s)
    }

    /// `ν_s^∞` sampled at the cell centers of `axes` and normalized on the grid.
    pub fn gibbs_grid(&self, s: f64, axes: Vec<Axis>) -> Result<GridDensity> {
        if axes.len() != self.dim {
            return Err(invalid("grid dimension does not match the spec"));
        }
        let pot = self.potential.clone();
        let beta = self.beta;
        GridDensity::from_log_fn(axes, s, |x| -beta * pot.value(x, s))
    }
}

fn gaussian_partition(potential: &dyn Potential, beta: f64, s: f64) -> Result<GibbsSnapshot> {
    let q = potential.quadratic(s).ok_or(Error::NonQuadratic { time: s })?;
    let n = q.center.len() as f64;
    let log_det = crate::linalg::spd_log_det(&q.stiffness)?;
    let log_z = 0.5 * n * ln(2.0 * PI / beta) - 0.5 * log_det - beta * q.offset;
    Ok(GibbsSnapshot::new(s, exp(log_z), beta, 0.0))
}

fn gibbs_gaussian(potential: &dyn Potential, beta: f64, s: f64) -> Result<GaussianLaw> {
    let q = potential.quadratic(s).ok_or(Error::NonQuadratic { time: s })?;
    let cov = spd_inverse(&q.stiffness)? / beta;
    GaussianLaw::new(q.center, cov)
}

impl LangevinSpec {
    /// `𝒵(s) = Z(s) (2π/β)^{n/2} det(M)^{1/2}`; the momentum integral is exact.
    pub fn partition_function(&self, s: f64, cfg: &QuadratureConfig) -> Result<GibbsSnapshot> {
        let z = partition_function(self.potential.as_ref(), self.dim, self.beta, s, cfg)?;
        let factor = self.momentum_normalizer()?;
        Ok(GibbsSnapshot::new(s, z.normalizer * factor, self.beta, z.quadrature_error * factor))
    }

    pub fn gaussian_partition_function(&self, s: f64) -> Result<GibbsSnapshot> {
        let z = gaussian_partition(self.potential.as_ref(), self.beta, s)?;
        Ok(GibbsSnapshot::new(s, z.normalizer * self.momentum_normalizer()?, self.beta, 0.0))
    }

    fn momentum_normalizer(&self) -> Result<f64> {
        let n = self.dim as f64;
        Ok(exp(0.5 * n * ln(2.0 * PI / self.beta) + 0.5 * crate::linalg::spd_log_det(&self.mass)?))
    }

    /// `π_s^∞` on phase space: position block from `V`, momentum block `N(0, M/β)`.
    pub fn gibbs_gaussian(&self, s: f64) -> Result<GaussianLaw> {
        let position = gibbs_gaussian(self.potential.as_ref(), self.beta, s)?;
        let mean = Vector::from_iterator(
            2 * self.dim,
            position.mean.iter().copied().chain(core::iter::repeat_n(0.0, self.dim)),
        );
        let cov = crate::linalg::block_diag(&position.cov, &(&self.mass / self.beta));
        GaussianLaw::new(mean, cov)
    }

    /// Position marginal `ν_s^∞`.
    pub fn position_gibbs_gaussian(&self, s: f64) -> Result<GaussianLaw> {
        gibbs_gaussian(self.potential.as_ref(), self.beta, s)
    }

    /// `π_s^∞` on a `(q, p)` grid (`n = 1`).
    pub fn gibbs_grid(&self, s: f64, q_axis: Axis, p_axis: Axis) -> Result<GridDensity> {
        if self.dim != 1 {
            return Err(Error::Unsupported(String::from("phase-space grids need n = 1")));
        }
        let pot = self.potential.clone();
        let beta = self.beta;
        let minv = self.mass_inverse[(0, 0)];
        GridDensity::from_log_fn(alloc::vec![q_axis, p_axis], s, |z| {
            -beta * (pot.value(&z[..1], s) + 0.5 * minv * z[1] * z[1])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(k: Schedule) -> Arc<dyn Potential> {
        Arc::new(QuadraticPotential::new(1, k))
    }

    #[test]
    fn zero_circulation_passes_validation() {
        let spec = DiffusionSpec::new(1, Arc::new(TanhPerturbedPotential { dim: 1, amplitude: Schedule::Constant(0.4) }), 1.0, 1.0).unwrap();
        let probes = ProbeGrid::uniform(1, 3.0, 13, vec![0.0, 0.5]);
        let report = validate_spec(&spec, &probes, 1e-12).unwrap();
        assert!(report.passed);
        assert_eq!(report.max_residual, 0.0);
    }

    #[test]
    fn rotation_with_radial_potential_passes() {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(2, Schedule::Constant(1.5)));
        let spec = DiffusionSpec::new(2, pot, 2.0, 1.0)
            .unwrap()
            .with_circulation(Arc::new(LinearCirculation::rotation(0.7)));
        let probes = ProbeGrid::uniform(2, 2.0, 7, vec![0.0]);
        let report = validate_spec(&spec, &probes, 1e-14).unwrap();
        assert!(report.passed, "{:?}", report.failures());
        assert!(report.max_residual < 1e-15);
    }

    #[test]
    fn non_divergence_free_field_fails() {
        let spec = DiffusionSpec::new(1, quad(Schedule::Constant(1.0)), 1.0, 1.0)
            .unwrap()
            .with_circulation(Arc::new(LinearCirculation::new(Mat::from_element(1, 1, 1.0))));
        let probes = ProbeGrid { points: vec![vec![0.5]], times: vec![0.0] };
        let report = validate_spec(&spec, &probes, 1e-8).unwrap();
        assert!(!report.passed);
        let x: f64 = 0.5;
        let expected = (exp(-x * x / 2.0) * (1.0 - x * x)).abs();
        assert!((report.max_residual - expected).abs() < 1e-15);
    }

    #[test]
    fn ellipticity_violation_is_reported() {
        let spec = DiffusionSpec::new(1, quad(Schedule::Constant(1.0)), 1.0, 1.0)
            .unwrap()
            .with_noise(Arc::new(ScalarNoise { dim: 1, scale: Schedule::Constant(0.5) }), 0.5)
            .unwrap();
        let report = validate_spec(&spec, &ProbeGrid::uniform(1, 1.0, 3, vec![0.0]), 1e-8).unwrap();
        assert!(!report.passed);
        assert!((report.min_eigenvalue - 0.25).abs() < 1e-15);
    }

    #[test]
    fn partition_function_of_unit_quadratic() {
        let spec = DiffusionSpec::new(1, quad(Schedule::Constant(1.0)), 1.0, 1.0).unwrap();
        let z = spec.partition_function(0.0, &spec.default_quadrature(0.0)).unwrap();
        assert!((z.normalizer - sqrt(2.0 * PI)).abs() / sqrt(2.0 * PI) < 1e-8);
        assert_eq!(z.free_energy, -ln(z.normalizer) / spec.beta);
    }

    #[test]
    fn stiffness_switch_free_energy_difference() {
        let spec = DiffusionSpec::new(1, quad(Schedule::ramp(1.0, 2.0, 1.0)), 1.0, 1.0).unwrap();
        let f0 = spec.partition_function(0.0, &spec.default_quadrature(0.0)).unwrap().free_energy;
        let f1 = spec.partition_function(1.0, &spec.default_quadrature(1.0)).unwrap().free_energy;
        assert!((f1 - f0 - 0.5 * ln(2.0)).abs() < 1e-9);
    }

    #[test]
    fn two_dimensional_quadrature() {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(2, Schedule::Constant(2.0)));
        let spec = DiffusionSpec::new(2, pot, 1.5, 1.0).unwrap();
        let z = spec.partition_function(0.0, &spec.default_quadrature(0.0)).unwrap();
        let exact = spec.gaussian_partition_function(0.0).unwrap().normalizer;
        assert!((z.normalizer - exact).abs() / exact < 1e-8);
    }

    #[test]
    fn small_box_is_rejected() {
        let spec = DiffusionSpec::new(1, quad(Schedule::Constant(1.0)), 1.0, 1.0).unwrap();
        let mut cfg = spec.default_quadrature(0.0);
        cfg.half_width = 2.0;
        assert!(matches!(spec.partition_function(0.0, &cfg), Err(Error::DomainTooSmall { .. })));
    }

    #[test]
    fn gibbs_gaussian_variance() {
        let spec = DiffusionSpec::new(1, quad(Schedule::ramp(1.0, 3.0, 1.0)), 2.0, 1.0).unwrap();
        let law = spec.gibbs_gaussian(0.5).unwrap();
        assert!((law.cov[(0, 0)] - 1.0 / (2.0 * 2.0)).abs() < 1e-15);
        let tanh_spec = DiffusionSpec::new(1, Arc::new(TanhPerturbedPotential { dim: 1, amplitude: Schedule::Constant(0.3) }), 1.0, 1.0).unwrap();
        assert!(matches!(tanh_spec.gibbs_gaussian(0.0), Err(Error::NonQuadratic { .. })));
    }

    #[test]
    fn grid_gibbs_is_normalized() {
        let spec = DiffusionSpec::new(1, quad(Schedule::Constant(1.0)), 1.0, 1.0).unwrap();
        let g = spec.gibbs_grid(0.0, vec![Axis::new(-10.0, 10.0, 400)]).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn langevin_momentum_marginal() {
        let spec = LangevinSpec::new(1, quad(Schedule::Constant(2.0)), 1.0, 4.0, 1.0).unwrap();
        let law = spec.gibbs_gaussian(0.0).unwrap();
        assert!((law.cov[(1, 1)] - 0.25).abs() < 1e-15);
        assert!((law.cov[(0, 0)] - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn langevin_reverse_hamiltonian_drift_is_mirrored() {
        let spec = LangevinSpec::new(1, quad(Schedule::ramp(1.0, 2.0, 1.0)), 0.7, 1.0, 1.0).unwrap();
        let z = [0.3, -1.1];
        let s = 0.2;
        let (mut f, mut r) = ([0.0; 2], [0.0; 2]);
        spec.hamiltonian_drift(&z, spec.horizon - s, &mut f);
        spec.reverse_drift(&z, s, &mut r);
        let mut fric = [0.0; 1];
        spec.velocity(&z[1..], &mut fric);
        assert_eq!(r[0], -f[0]);
        assert!((r[1] - (-f[1] - spec.friction * fric[0])).abs() < 1e-15);
    }
}

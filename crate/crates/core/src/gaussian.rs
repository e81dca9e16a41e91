//! Closed forms for quadratic potentials: Gaussian laws and divergences,
//! exact moment flows of linear SDEs, the Langevin fundamental matrix and
//! quadratic value functions from Riccati equations.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::linalg::{block_diag, is_symmetric, psd_sqrt, spd_inverse, spd_log_det, symmetrize, Mat, Vector};
use crate::math::{abs, ceil, exp, floor, ln, normal_cdf, sqrt, PI};
use crate::model::{DiffusionSpec, LangevinSpec};

/// Gaussian law `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub mean: Vector,
    pub cov: Mat,
    /// `L` with `L Lᵀ = cov`.
    factor: Mat,
}

impl GaussianLaw {
    pub fn new(mean: Vector, cov: Mat) -> Result<Self> {
        let d = mean.len();
        if cov.shape() != (d, d) || d == 0 {
            return Err(invalid("covariance shape does not match the mean"));
        }
        if !is_symmetric(&cov, 1e-9) || cov.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("covariance is not symmetric: {cov}")));
        }
        let cov = symmetrize(&cov);
        let factor = match cov.clone().cholesky() {
            Some(c) => c.l(),
            None => {
                if crate::linalg::min_eigenvalue(&cov) < -1e-12 * (1.0 + cov.amax()) {
                    return Err(Error::Singular(format!("covariance has a negative eigenvalue: {cov}")));
                }
                psd_sqrt(&cov)
            }
        };
        Ok(Self { mean, cov, factor })
    }

    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        Self::new(Vector::from_element(1, mean), Mat::from_element(1, 1, variance))
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(Vector::zeros(dim), Mat::identity(dim, dim)).expect("identity covariance")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn precision(&self) -> Result<Mat> {
        spd_inverse(&self.cov)
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        let prec = self.precision()?;
        let r = Vector::from_iterator(d, x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        Ok(-0.5 * r.dot(&(&prec * &r)) - 0.5 * spd_log_det(&self.cov)? - 0.5 * d as f64 * ln(2.0 * PI))
    }

    /// Draw one sample into `out`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        let mut z = [0.0; 8];
        let mut heap;
        let z: &mut [f64] = if d <= 8 {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            out[i] = self.mean[i] + (0..d).map(|j| self.factor[(i, j)] * z[j]).sum::<f64>();
        }
    }

    /// Marginal on the listed coordinates.
    pub fn marginal(&self, idx: &[usize]) -> Result<GaussianLaw> {
        let mean = Vector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i]));
        let cov = Mat::from_fn(idx.len(), idx.len(), |a, b| self.cov[(idx[a], idx[b])]);
        GaussianLaw::new(mean, cov)
    }

    /// Image under `z ↦ Fz + e`.
    pub fn affine_image(&self, f: &Mat, e: &Vector) -> Result<GaussianLaw> {
        GaussianLaw::new(f * &self.mean + e, f * &self.cov * f.transpose())
    }
}

/// `KL(P ‖ Q)`.
pub fn gaussian_kl(p: &GaussianLaw, q: &GaussianLaw) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(invalid("laws have different dimensions"));
    }
    let d = p.dim() as f64;
    let qinv = q.precision()?;
    let dm = &q.mean - &p.mean;
    let kl = 0.5 * ((&qinv * &p.cov).trace() + dm.dot(&(&qinv * &dm)) - d + spd_log_det(&q.cov)? - spd_log_det(&p.cov)?);
    Ok(kl.max(0.0))
}

/// `W₂(P, Q)`.
pub fn wasserstein2(p: &GaussianLaw, q: &GaussianLaw) -> f64 {
    let dm = &p.mean - &q.mean;
    let rq = psd_sqrt(&q.cov);
    let cross = psd_sqrt(&(&rq * &p.cov * &rq));
    let bures = (&p.cov + &q.cov - cross * 2.0).trace();
    sqrt((dm.norm_squared() + bures).max(0.0))
}

/// `∫|p − q|` for one-dimensional Gaussians, exact via the density crossings.
pub fn l1_distance_1d(p: &GaussianLaw, q: &GaussianLaw) -> Result<f64> {
    if p.dim() != 1 || q.dim() != 1 {
        return Err(invalid("one-dimensional laws expected"));
    }
    let (m1, m2) = (p.mean[0], q.mean[0]);
    let (s1, s2) = (sqrt(p.cov[(0, 0)]), sqrt(q.cov[(0, 0)]));
    if !(s1 > 0.0 && s2 > 0.0) {
        return Err(Error::Singular(String::from("zero variance")));
    }
    // ln p − ln q = c2 x² + c1 x + c0
    let c2 = 0.5 / (s2 * s2) - 0.5 / (s1 * s1);
    let c1 = m1 / (s1 * s1) - m2 / (s2 * s2);
    let c0 = m2 * m2 / (2.0 * s2 * s2) - m1 * m1 / (2.0 * s1 * s1) + ln(s2 / s1);
    let mut roots: Vec<f64> = Vec::new();
    if abs(c2) < 1e-14 * (abs(c1) + abs(c0) + 1.0) {
        if c1 != 0.0 {
            roots.push(-c0 / c1);
        }
    } else {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc > 0.0 {
            let r = sqrt(disc);
            // stable quadratic roots
            let t = -0.5 * (c1 + if c1 >= 0.0 { r } else { -r });
            roots.push(t / c2);
            if t != 0.0 {
                roots.push(c0 / t);
            }
            roots.sort_by(f64::total_cmp);
        }
    }
    let fp = |x: f64| if x.is_infinite() { if x > 0.0 { 1.0 } else { 0.0 } } else { normal_cdf((x - m1) / s1) };
    let fq = |x: f64| if x.is_infinite() { if x > 0.0 { 1.0 } else { 0.0 } } else { normal_cdf((x - m2) / s2) };
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend(roots);
    edges.push(f64::INFINITY);
    Ok(edges.windows(2).map(|w| abs((fp(w[1]) - fp(w[0])) - (fq(w[1]) - fq(w[0])))).sum())
}

/// `∫|p − q|` for Gaussians. Exact in one dimension and for equal covariances.
pub fn gaussian_l1_distance(p: &GaussianLaw, q: &GaussianLaw) -> Result<f64> {
    if p.dim() == 1 {
        return l1_distance_1d(p, q);
    }
    if (&p.cov - &q.cov).amax() > 1e-12 * (1.0 + p.cov.amax()) {
        return Err(Error::Unsupported(String::from("L1 distance of multivariate Gaussians with unequal covariances")));
    }
    let dm = &p.mean - &q.mean;
    let delta = sqrt(dm.dot(&(p.precision()? * &dm)));
    Ok(2.0 * (2.0 * normal_cdf(0.5 * delta) - 1.0))
}

/// `E = KL(π ‖ π∞) + ∫[a|∇_p u|² + 2b ∇_p u·∇_q u + c|∇_q u|²] dπ`,
/// `u = ln(dπ/dπ∞)`, for laws on phase space ordered `(q, p)`.
pub fn gaussian_modified_functional(law: &GaussianLaw, reference: &GaussianLaw, a: f64, b: f64, c: f64) -> Result<f64> {
    let d = law.dim();
    if d != reference.dim() || d % 2 != 0 {
        return Err(invalid("phase-space laws of equal even dimension expected"));
    }
    if a < 0.0 || c < 0.0 || a * c < b * b * (1.0 - 1e-12) {
        return Err(invalid(format!("[[a, b], [b, c]] = [[{a}, {b}], [{b}, {c}]] is not positive semidefinite")));
    }
    let n = d / 2;
    let kl = gaussian_kl(law, reference)?;
    let (_, v_mean, v_cov) = score_moments(law, reference)?;
    // weight on v = (v_q, v_p): [[c I, b I], [b I, a I]]
    let mut w = Mat::zeros(d, d);
    for i in 0..n {
        w[(i, i)] = c;
        w[(n + i, n + i)] = a;
        w[(i, n + i)] = b;
        w[(n + i, i)] = b;
    }
    Ok(kl + (&w * &v_cov).trace() + v_mean.dot(&(&w * &v_mean)))
}

/// `∇ ln(dP/dQ)(z) = Gz + h`; returns `(G, E[∇u], Cov[∇u])` under `P`.
pub(crate) fn score_moments(law: &GaussianLaw, reference: &GaussianLaw) -> Result<(Mat, Vector, Mat)> {
    let (g, h) = log_ratio_gradient(law, reference)?;
    let v_mean = &g * &law.mean + h;
    let v_cov = &g * &law.cov * g.transpose();
    Ok((g, v_mean, v_cov))
}

/// `(G, h)` with `∇ ln(dP/dQ)(z) = Gz + h`.
pub fn log_ratio_gradient(law: &GaussianLaw, reference: &GaussianLaw) -> Result<(Mat, Vector)> {
    let pinv = law.precision()?;
    let qinv = reference.precision()?;
    let g = &qinv - &pinv;
    let h = &pinv * &law.mean - &qinv * &reference.mean;
    Ok((g, h))
}

/// Coefficients of `dz = (B(s)z + e(s)) ds + √(2/β) σ dw` with `G = σσᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCoefficients {
    pub drift: Mat,
    pub offset: Vector,
    pub gamma: Mat,
}

type CoefficientFn = dyn Fn(f64) -> Result<LinearCoefficients> + Send + Sync;

/// A linear SDE with time-dependent coefficients; its Gaussian laws evolve by
/// `m' = Bm + e`, `C' = BC + CBᵀ + (2/β)G`.
#[derive(Clone)]
pub struct LinearSde {
    pub dim: usize,
    pub beta: f64,
    coefficients: Arc<CoefficientFn>,
}

impl core::fmt::Debug for LinearSde {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("LinearSde").field("dim", &self.dim).field("beta", &self.beta).finish_non_exhaustive()
    }
}

fn brownian_parts(spec: &DiffusionSpec, s: f64) -> Result<(Mat, Vector, Mat, Mat)> {
    let q = spec.potential.quadratic(s).ok_or(Error::NonQuadratic { time: s })?;
    let sigma = spec
        .noise
        .constant(s)
        .ok_or_else(|| Error::Unsupported(String::from("state-dependent noise in a linear SDE")))?;
    let gamma = &sigma * sigma.transpose();
    let r = if spec.circulation.is_zero() {
        Mat::zeros(spec.dim, spec.dim)
    } else {
        spec.circulation
            .linear(s)
            .ok_or_else(|| Error::Unsupported(String::from("nonlinear circulation in a linear SDE")))?
    };
    let gk = &gamma * &q.stiffness;
    let e = &gk * &q.center;
    Ok((r, e, gk, gamma))
}

impl LinearSde {
    pub fn new(
        dim: usize,
        beta: f64,
        coefficients: impl Fn(f64) -> Result<LinearCoefficients> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, beta, coefficients: Arc::new(coefficients) }
    }

    pub fn coefficients(&self, s: f64) -> Result<LinearCoefficients> {
        (self.coefficients)(s)
    }

    /// Forward Brownian dynamics of a quadratic spec with constant noise and linear circulation.
    pub fn brownian(spec: &DiffusionSpec) -> Result<Self> {
        brownian_parts(spec, 0.0)?;
        let spec = spec.clone();
        Ok(Self::new(spec.dim, spec.beta, move |s| {
            let (r, e, gk, gamma) = brownian_parts(&spec, s)?;
            Ok(LinearCoefficients { drift: r - gk, offset: e, gamma })
        }))
    }

    /// Reverse Brownian dynamics: circulation sign-flipped, coefficients at `T − s`.
    pub fn brownian_reverse(spec: &DiffusionSpec) -> Result<Self> {
        brownian_parts(spec, 0.0)?;
        let spec = spec.clone();
        Ok(Self::new(spec.dim, spec.beta, move |s| {
            let (r, e, gk, gamma) = brownian_parts(&spec, spec.horizon - s)?;
            Ok(LinearCoefficients { drift: -r - gk, offset: e, gamma })
        }))
    }

    /// Forward Langevin dynamics of a quadratic spec on `z = (q, p)`.
    pub fn langevin(spec: &LangevinSpec) -> Result<Self> {
        Self::langevin_with_sign(spec, false)
    }

    /// Reverse Langevin dynamics: Hamiltonian part sign-flipped, coefficients at `T − s`.
    pub fn langevin_reverse(spec: &LangevinSpec) -> Result<Self> {
        Self::langevin_with_sign(spec, true)
    }

    fn langevin_with_sign(spec: &LangevinSpec, reverse: bool) -> Result<Self> {
        spec.potential.quadratic(0.0).ok_or(Error::NonQuadratic { time: 0.0 })?;
        let spec = spec.clone();
        let n = spec.dim;
        let gamma = block_diag(&Mat::zeros(n, n), &(Mat::identity(n, n) * spec.friction));
        Ok(Self::new(2 * n, spec.beta, move |s| {
            let t = if reverse { spec.horizon - s } else { s };
            let q = spec.potential.quadratic(t).ok_or(Error::NonQuadratic { time: t })?;
            let sign = if reverse { -1.0 } else { 1.0 };
            let mut b = Mat::zeros(2 * n, 2 * n);
            b.view_mut((0, n), (n, n)).copy_from(&(&spec.mass_inverse * sign));
            b.view_mut((n, 0), (n, n)).copy_from(&(&q.stiffness * -sign));
            b.view_mut((n, n), (n, n)).copy_from(&(&spec.mass_inverse * -spec.friction));
            let mut e = Vector::zeros(2 * n);
            e.rows_mut(n, n).copy_from(&(&q.stiffness * &q.center * sign));
            Ok(LinearCoefficients { drift: b, offset: e, gamma: gamma.clone() })
        }))
    }

    /// The same dynamics driven by the optimal feedback `u* = −2σᵀ∇U` of a
    /// quadratic value function: `B − 4GA`, `e − 2Gδ`.
    pub fn with_optimal_feedback(&self, value: &QuadraticValueFunction) -> Self {
        let base = self.clone();
        let value = value.clone();
        Self::new(self.dim, self.beta, move |s| {
            let mut c = base.coefficients(s)?;
            let (a, delta, _) = value.coefficients(s);
            c.drift -= &c.gamma * &a * 4.0;
            c.offset -= &c.gamma * &delta * 2.0;
            Ok(c)
        })
    }

    fn moment_rhs(&self, s: f64, m: &Vector, c: &Mat) -> Result<(Vector, Mat)> {
        let k = self.coefficients(s)?;
        let dm = &k.drift * m + &k.offset;
        let bc = &k.drift * c;
        let dc = &bc + bc.transpose() + &k.gamma * (2.0 / self.beta);
        Ok((dm, dc))
    }

    /// Exact law at `s1` of the process started from `law` at `s0`, by RK4
    /// on the moment equations with step at most `max_step`.
    pub fn propagate(&self, law: &GaussianLaw, s0: f64, s1: f64, max_step: f64) -> Result<GaussianLaw> {
        if law.dim() != self.dim {
            return Err(invalid("initial law has wrong dimension"));
        }
        if s1 < s0 || !(max_step > 0.0) {
            return Err(invalid("propagation needs s1 >= s0 and a positive step"));
        }
        let steps = ceil((s1 - s0) / max_step).max(1.0) as usize;
        let h = (s1 - s0) / steps as f64;
        let mut m = law.mean.clone();
        let mut c = law.cov.clone();
        if s1 == s0 {
            return Ok(law.clone());
        }
        for k in 0..steps {
            let s = s0 + k as f64 * h;
            let (m1, c1) = self.moment_rhs(s, &m, &c)?;
            let (m2, c2) = self.moment_rhs(s + 0.5 * h, &(&m + &m1 * (0.5 * h)), &(&c + &c1 * (0.5 * h)))?;
            let (m3, c3) = self.moment_rhs(s + 0.5 * h, &(&m + &m2 * (0.5 * h)), &(&c + &c2 * (0.5 * h)))?;
            let (m4, c4) = self.moment_rhs(s + h, &(&m + &m3 * h), &(&c + &c3 * h))?;
            m += (m1 + m2 * 2.0 + m3 * 2.0 + m4) * (h / 6.0);
            c += (c1 + c2 * 2.0 + c3 * 2.0 + c4) * (h / 6.0);
        }
        GaussianLaw::new(m, symmetrize(&c))
    }

    /// Laws at each of `times` (ascending), starting from `law` at `times[0]`.
    pub fn trajectory(&self, law: &GaussianLaw, times: &[f64], max_step: f64) -> Result<Vec<GaussianLaw>> {
        let mut out = Vec::with_capacity(times.len());
        let mut cur = law.clone();
        let mut prev = match times.first() {
            Some(&t) => t,
            None => return Ok(out),
        };
        for &t in times {
            cur = self.propagate(&cur, prev, t, max_step)?;
            out.push(cur.clone());
            prev = t;
        }
        Ok(out)
    }
}

/// Default RK4 step for moment flows: `1e−3·T`.
pub fn default_step(horizon: f64) -> f64 {
    1e-3 * horizon
}

/// Exact law at time `s` of the forward Brownian process of a quadratic spec.
pub fn ou_moments(spec: &DiffusionSpec, init: &GaussianLaw, s: f64) -> Result<GaussianLaw> {
    LinearSde::brownian(spec)?.propagate(init, 0.0, s, default_step(spec.horizon))
}

/// State-transition matrix `Γ` of the Langevin flow on a time grid:
/// `Γ' = −Σ(s)Γ`, `Γ(0) = I`, with
/// `Σ(s) = [[0, −M⁻¹], [K(s), ξM⁻¹]]`, so that `z(s) = Γ(s)z(0) + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix {
    pub times: Vec<f64>,
    pub gamma: Vec<Mat>,
    pub generator: Vec<Mat>,
    /// `∫₀ˢ Γ⁻¹e dt`
    offset_integral: Vec<Vector>,
    /// `∫₀ˢ Γ⁻¹DΓ⁻ᵀ dt`, `D = (2/β) diag(0, ξI)`
    noise_integral: Vec<Mat>,
    friction_trace: f64,
}

impl FundamentalMatrix {
    pub fn det(&self, k: usize) -> f64 {
        self.gamma[k].determinant()
    }

    /// `|det Γ(s)·e^{ξ Tr(M⁻¹) s} − 1|` maximized over the grid.
    pub fn det_identity_residual(&self) -> f64 {
        (0..self.times.len())
            .map(|k| abs(self.det(k) * exp(self.friction_trace * self.times[k]) - 1.0))
            .fold(0.0, f64::max)
    }

    /// Law at grid time `k` of the forward process started from `init` at `s = 0`.
    pub fn pushforward(&self, init: &GaussianLaw, k: usize) -> Result<GaussianLaw> {
        let g = &self.gamma[k];
        let mean = g * (&init.mean + &self.offset_integral[k]);
        let cov = g * (&init.cov + &self.noise_integral[k]) * g.transpose();
        GaussianLaw::new(mean, symmetrize(&cov))
    }
}

/// Fundamental matrix of the forward Langevin flow of a quadratic spec at the
/// given ascending times (starting at 0), by RK4 with step at most `max_step`.
pub fn langevin_propagator(spec: &LangevinSpec, times: &[f64], max_step: f64) -> Result<FundamentalMatrix> {
    if times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("propagator times must be ascending from 0"));
    }
    let sde = LinearSde::langevin(spec)?;
    let d = sde.dim;
    let noise = |c: &LinearCoefficients| &c.gamma * (2.0 / spec.beta);
    // state: Γ, Γ⁻¹, ∫Γ⁻¹e, ∫Γ⁻¹DΓ⁻ᵀ
    let rhs = |s: f64, gi: &Mat| -> Result<(Mat, Vector, Mat, Mat)> {
        let c = sde.coefficients(s)?;
        let dd = noise(&c);
        Ok((-(gi * &c.drift), gi * &c.offset, gi * dd * gi.transpose(), c.drift))
    };
    let mut g = Mat::identity(d, d);
    let mut gi = Mat::identity(d, d);
    let mut ie = Vector::zeros(d);
    let mut id = Mat::zeros(d, d);
    let mut out = FundamentalMatrix {
        times: times.to_vec(),
        gamma: Vec::with_capacity(times.len()),
        generator: Vec::with_capacity(times.len()),
        offset_integral: Vec::with_capacity(times.len()),
        noise_integral: Vec::with_capacity(times.len()),
        friction_trace: spec.friction * spec.mass_inverse.trace(),
    };
    let record = |out: &mut FundamentalMatrix, s: f64, g: &Mat, ie: &Vector, id: &Mat| -> Result<()> {
        let c = sde.coefficients(s)?;
        out.gamma.push(g.clone());
        out.generator.push(-c.drift);
        out.offset_integral.push(ie.clone());
        out.noise_integral.push(id.clone());
        Ok(())
    };
    record(&mut out, 0.0, &g, &ie, &id)?;
    for w in times.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        let steps = ceil((s1 - s0) / max_step).max(1.0) as usize;
        let h = (s1 - s0) / steps as f64;
        for k in 0..steps {
            let s = s0 + k as f64 * h;
            // Γ' = BΓ, (Γ⁻¹)' = −Γ⁻¹B
            let (gi1, e1, d1, b1) = rhs(s, &gi)?;
            let (gi2, e2, d2, b2) = rhs(s + 0.5 * h, &(&gi + &gi1 * (0.5 * h)))?;
            let (gi3, e3, d3, _) = rhs(s + 0.5 * h, &(&gi + &gi2 * (0.5 * h)))?;
            let (gi4, e4, d4, b4) = rhs(s + h, &(&gi + &gi3 * h))?;
            let k1 = &b1 * &g;
            let k2 = &b2 * (&g + &k1 * (0.5 * h));
            let k3 = &b2 * (&g + &k2 * (0.5 * h));
            let k4 = &b4 * (&g + &k3 * h);
            g += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            gi += (gi1 + gi2 * 2.0 + gi3 * 2.0 + gi4) * (h / 6.0);
            ie += (e1 + e2 * 2.0 + e3 * 2.0 + e4) * (h / 6.0);
            id += (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (h / 6.0);
        }
        if !g.iter().all(|v| v.is_finite()) || g.determinant() == 0.0 {
            return Err(Error::Singular(format!("fundamental matrix at s = {s1}")));
        }
        record(&mut out, s1, &g, &ie, &symmetrize(&id))?;
    }
    Ok(out)
}

/// `U(z, s) = zᵀA(s)z + δ(s)·z + c(s)` on a uniform time grid, with cubic
/// Hermite interpolation in time.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticValueFunction {
    pub beta: f64,
    pub horizon: f64,
    pub step: f64,
    pub a: Vec<Mat>,
    pub delta: Vec<Vector>,
    pub c: Vec<f64>,
    da: Vec<Mat>,
    ddelta: Vec<Vector>,
    dc: Vec<f64>,
}

/// `∂V/∂s = zᵀQz + q·z + q₀`.
pub type CostFn = dyn Fn(f64) -> Result<(Mat, Vector, f64)> + Send + Sync;

impl QuadraticValueFunction {
    pub fn dim(&self) -> usize {
        self.delta[0].len()
    }

    /// `(A(s), δ(s), c(s))`.
    pub fn coefficients(&self, s: f64) -> (Mat, Vector, f64) {
        let last = self.a.len() - 1;
        let t = (s / self.step).clamp(0.0, last as f64);
        let k = (floor(t) as usize).min(last.saturating_sub(1));
        if last == 0 {
            return (self.a[0].clone(), self.delta[0].clone(), self.c[0]);
        }
        let th = t - k as f64;
        let h = self.step;
        let (h00, h10, h01, h11) = (
            2.0 * th * th * th - 3.0 * th * th + 1.0,
            th * th * th - 2.0 * th * th + th,
            -2.0 * th * th * th + 3.0 * th * th,
            th * th * th - th * th,
        );
        let a = &self.a[k] * h00 + &self.da[k] * (h10 * h) + &self.a[k + 1] * h01 + &self.da[k + 1] * (h11 * h);
        let d = &self.delta[k] * h00
            + &self.ddelta[k] * (h10 * h)
            + &self.delta[k + 1] * h01
            + &self.ddelta[k + 1] * (h11 * h);
        let c = self.c[k] * h00 + self.dc[k] * h10 * h + self.c[k + 1] * h01 + self.dc[k + 1] * h11 * h;
        (a, d, c)
    }

    pub fn value(&self, z: &[f64], s: f64) -> f64 {
        let (a, d, c) = self.coefficients(s);
        let v = Vector::from_column_slice(z);
        v.dot(&(&a * &v)) + d.dot(&v) + c
    }

    /// `∇U = 2Az + δ`.
    pub fn gradient(&self, z: &[f64], s: f64) -> Vector {
        let (a, d, _) = self.coefficients(s);
        &a * Vector::from_column_slice(z) * 2.0 + d
    }

    /// `g = e^{−βU}`.
    pub fn g(&self, z: &[f64], s: f64) -> f64 {
        exp(-self.beta * self.value(z, s))
    }

    /// Largest coefficient magnitude over the grid.
    pub fn max_abs(&self) -> f64 {
        self.a
            .iter()
            .map(|m| m.amax())
            .chain(self.delta.iter().map(|d| d.amax()))
            .chain(self.c.iter().map(|c| abs(*c)))
            .fold(0.0, f64::max)
    }
}

/// Backward RK4 solve of the Riccati system for `U` with `U(·, T) = 0`:
///
/// `A' + BᵀA + AB − 4AGA + Q = 0`,
/// `δ' + Bᵀδ + 2Ae − 4AGδ + q = 0`,
/// `c' + e·δ − δᵀGδ + (2/β)tr(GA) + q₀ = 0`.
pub fn solve_riccati(sde: &LinearSde, cost: &CostFn, horizon: f64, max_step: f64) -> Result<QuadraticValueFunction> {
    let steps = ceil(horizon / max_step).max(1.0) as usize;
    let h = horizon / steps as f64;
    let d = sde.dim;
    let beta = sde.beta;
    let rhs = |s: f64, a: &Mat, dl: &Vector| -> Result<(Mat, Vector, f64)> {
        let k = sde.coefficients(s)?;
        let (q, ql, q0) = cost(s)?;
        let bt_a = k.drift.transpose() * a;
        let ag = a * &k.gamma;
        let da = -(&bt_a + bt_a.transpose() - &ag * a * 4.0 + q);
        let dd = -(k.drift.transpose() * dl + a * &k.offset * 2.0 - &ag * dl * 4.0 + ql);
        let dc = -(k.offset.dot(dl) - dl.dot(&(&k.gamma * dl)) + (2.0 / beta) * (&k.gamma * a).trace() + q0);
        Ok((symmetrize(&da), dd, dc))
    };
    let n = steps + 1;
    let mut a_s = vec![Mat::zeros(d, d); n];
    let mut d_s = vec![Vector::zeros(d); n];
    let mut c_s = vec![0.0; n];
    let mut da_s = vec![Mat::zeros(d, d); n];
    let mut dd_s = vec![Vector::zeros(d); n];
    let mut dc_s = vec![0.0; n];
    let (mut a, mut dl, mut c) = (Mat::zeros(d, d), Vector::zeros(d), 0.0);
    let (x, y, z) = rhs(horizon, &a, &dl)?;
    da_s[steps] = x;
    dd_s[steps] = y;
    dc_s[steps] = z;
    for k in (0..steps).rev() {
        let s = (k + 1) as f64 * h;
        let hh = -h;
        let (a1, d1, c1) = rhs(s, &a, &dl)?;
        let (a2, d2, c2) = rhs(s + 0.5 * hh, &(&a + &a1 * (0.5 * hh)), &(&dl + &d1 * (0.5 * hh)))?;
        let (a3, d3, c3) = rhs(s + 0.5 * hh, &(&a + &a2 * (0.5 * hh)), &(&dl + &d2 * (0.5 * hh)))?;
        let (a4, d4, c4) = rhs(s + hh, &(&a + &a3 * hh), &(&dl + &d3 * hh))?;
        a += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (hh / 6.0);
        dl += (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (hh / 6.0);
        c += (c1 + 2.0 * c2 + 2.0 * c3 + c4) * (hh / 6.0);
        a = symmetrize(&a);
        let size = a.amax().max(dl.amax()).max(abs(c));
        if !(size <= 1e8) {
            return Err(Error::RiccatiBlowUp { time: k as f64 * h });
        }
        let (x, y, z) = rhs(k as f64 * h, &a, &dl)?;
        a_s[k] = a.clone();
        d_s[k] = dl.clone();
        c_s[k] = c;
        da_s[k] = x;
        dd_s[k] = y;
        dc_s[k] = z;
    }
    Ok(QuadraticValueFunction {
        beta,
        horizon,
        step: h,
        a: a_s,
        delta: d_s,
        c: c_s,
        da: da_s,
        ddelta: dd_s,
        dc: dc_s,
    })
}

fn brownian_cost(spec: &DiffusionSpec) -> Arc<CostFn> {
    let pot = spec.potential.clone();
    Arc::new(move |s| {
        let q = pot.quadratic(s).ok_or(Error::NonQuadratic { time: s })?;
        Ok(q.time_derivative_coefficients())
    })
}

fn riccati_step(horizon: f64, dt: f64) -> f64 {
    dt.min(1e-3 * horizon)
}

/// Value function of the Brownian control problem for a quadratic spec.
pub fn riccati_value_function(spec: &DiffusionSpec, dt: f64) -> Result<QuadraticValueFunction> {
    let sde = LinearSde::brownian(spec)?;
    solve_riccati(&sde, brownian_cost(spec).as_ref(), spec.horizon, riccati_step(spec.horizon, dt))
}

/// Value function `𝒰(q, p, s)` of the Langevin control problem for a quadratic spec.
pub fn langevin_riccati_value_function(spec: &LangevinSpec, dt: f64) -> Result<QuadraticValueFunction> {
    let sde = LinearSde::langevin(spec)?;
    let pot = spec.potential.clone();
    let n = spec.dim;
    let cost = move |s: f64| {
        let q = pot.quadratic(s).ok_or(Error::NonQuadratic { time: s })?;
        let (qq, ql, q0) = q.time_derivative_coefficients();
        let big = block_diag(&qq, &Mat::zeros(n, n));
        let lin = Vector::from_iterator(2 * n, ql.iter().copied().chain(core::iter::repeat_n(0.0, n)));
        Ok((big, lin, q0))
    };
    solve_riccati(&sde, &cost, spec.horizon, riccati_step(spec.horizon, dt))
}

/// Optimal initial law `∝ e^{−β(H(z, 0) + U(z, 0))}` together with its total
/// mass after division by the terminal normalizer (exactly 1 in theory).
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalInitialLaw {
    pub law: GaussianLaw,
    pub mass: f64,
}

impl OptimalInitialLaw {
    /// `ln(dν∞₀/dν*₀)(z)`.
    pub fn log_ratio_to(&self, gibbs: &GaussianLaw, z: &[f64]) -> Result<f64> {
        Ok(gibbs.log_density(z)? - self.law.log_density(z)?)
    }
}

/// `H(z) = ½(z − m)ᵀK(z − m) + offset`; returns the optimal initial law and its mass
/// relative to `ln Z_T`.
fn optimal_initial(
    stiffness: &Mat,
    center: &Vector,
    offset: f64,
    value: &QuadraticValueFunction,
    beta: f64,
    log_z_terminal: f64,
) -> Result<OptimalInitialLaw> {
    let (a, delta, c) = value.coefficients(0.0);
    let p = stiffness + &a * 2.0;
    let h = stiffness * center - delta;
    let k = 0.5 * center.dot(&(stiffness * center)) + offset + c;
    let pinv = spd_inverse(&p)?;
    let mean = &pinv * &h;
    let d = center.len() as f64;
    let log_mass = 0.5 * d * ln(2.0 * PI / beta) - 0.5 * spd_log_det(&p)? + beta * (0.5 * h.dot(&mean) - k) - log_z_terminal;
    Ok(OptimalInitialLaw { law: GaussianLaw::new(mean, pinv / beta)?, mass: exp(log_mass) })
}

/// `ν₀* = e^{−βV(·,0)} g(·,0) / Z(T)` for a quadratic Brownian spec.
pub fn optimal_initial_law(spec: &DiffusionSpec, value: &QuadraticValueFunction) -> Result<OptimalInitialLaw> {
    let q = spec.potential.quadratic(0.0).ok_or(Error::NonQuadratic { time: 0.0 })?;
    let z_t = spec.gaussian_partition_function(spec.horizon)?;
    optimal_initial(&q.stiffness, &q.center, q.offset, value, spec.beta, ln(z_t.normalizer))
}

/// `π₀* = e^{−βH(·,0)} g(·,0) / 𝒵(T)` for a quadratic Langevin spec.
pub fn optimal_initial_law_langevin(spec: &LangevinSpec, value: &QuadraticValueFunction) -> Result<OptimalInitialLaw> {
    let q = spec.potential.quadratic(0.0).ok_or(Error::NonQuadratic { time: 0.0 })?;
    let n = spec.dim;
    let h = block_diag(&q.stiffness, &spec.mass_inverse);
    let m = Vector::from_iterator(2 * n, q.center.iter().copied().chain(core::iter::repeat_n(0.0, n)));
    let z_t = spec.gaussian_partition_function(spec.horizon)?;
    optimal_initial(&h, &m, q.offset, value, spec.beta, ln(z_t.normalizer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Potential, QuadraticPotential, Schedule};
    use rand::SeedableRng;

    fn unit_spec(k: Schedule, beta: f64, horizon: f64) -> DiffusionSpec {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(1, k));
        DiffusionSpec::new(1, pot, beta, horizon).unwrap()
    }

    #[test]
    fn kl_closed_form() {
        let p = GaussianLaw::scalar(1.0, 1.0).unwrap();
        let q = GaussianLaw::scalar(0.0, 1.0).unwrap();
        assert!((gaussian_kl(&p, &q).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(gaussian_kl(&q, &q).unwrap(), 0.0);
        let p = GaussianLaw::scalar(0.3, 2.0).unwrap();
        let expected = 0.5 * (2.0 + 0.09 - 1.0 - ln(2.0));
        assert!((gaussian_kl(&p, &q).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn w2_and_l1_of_translates() {
        let p = GaussianLaw::scalar(1.0, 1.0).unwrap();
        let q = GaussianLaw::scalar(0.0, 1.0).unwrap();
        assert!((wasserstein2(&p, &q) - 1.0).abs() < 1e-12);
        let l1 = l1_distance_1d(&p, &q).unwrap();
        assert!((l1 - 2.0 * (2.0 * normal_cdf(0.5) - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn l1_of_unequal_variances_matches_quadrature() {
        let p = GaussianLaw::scalar(0.4, 0.5).unwrap();
        let q = GaussianLaw::scalar(-0.2, 2.0).unwrap();
        // adaptive quadrature of |p − q| split at the crossings, computed offline
        let reference = 0.744_122_792_560_934_8;
        let l1 = l1_distance_1d(&p, &q).unwrap();
        assert!((l1 - reference).abs() < 1e-9, "{l1}");
    }

    #[test]
    fn ou_from_off_center_start() {
        let spec = unit_spec(Schedule::Constant(1.0), 1.0, 1.0);
        let init = GaussianLaw::scalar(2.0, 1.0).unwrap();
        for s in [0.25, 0.5, 1.0] {
            let law = ou_moments(&spec, &init, s).unwrap();
            assert!((law.mean[0] - 2.0 * exp(-s)).abs() < 1e-12);
            assert!((law.cov[(0, 0)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fundamental_matrix_determinant() {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(1, Schedule::Constant(1.0)));
        let spec = LangevinSpec::new(1, pot, 1.0, 1.0, 1.0).unwrap();
        let fm = langevin_propagator(&spec, &[0.0, 0.5, 1.0], 1e-3).unwrap();
        assert!((fm.det(2) - exp(-1.0)).abs() < 1e-8);
        assert!(fm.det_identity_residual() < 1e-8);
    }

    #[test]
    fn stationary_langevin_pushforward() {
        let pot: Arc<dyn Potential> = Arc::new(QuadraticPotential::new(1, Schedule::Constant(2.0)));
        let spec = LangevinSpec::new(1, pot, 0.7, 2.0, 1.0).unwrap();
        let gibbs = spec.gibbs_gaussian(0.0).unwrap();
        let fm = langevin_propagator(&spec, &[0.0, 0.3, 1.0], 1e-3).unwrap();
        for k in 0..3 {
            let law = fm.pushforward(&gibbs, k).unwrap();
            assert!((&law.cov - &gibbs.cov).amax() < 1e-10);
            assert!(law.mean.amax() < 1e-12);
        }
    }

    #[test]
    fn time_independent_value_function_vanishes() {
        let spec = unit_spec(Schedule::Constant(1.5), 1.0, 1.0);
        let v = riccati_value_function(&spec, 1e-3).unwrap();
        assert_eq!(v.max_abs(), 0.0);
        assert_eq!(v.g(&[0.7], 0.2), 1.0);
    }

    #[test]
    fn optimal_initial_law_has_unit_mass() {
        let spec = unit_spec(Schedule::ramp(1.0, 2.0, 1.0), 1.0, 1.0);
        let v = riccati_value_function(&spec, 1e-3).unwrap();
        let opt = optimal_initial_law(&spec, &v).unwrap();
        assert!((opt.mass - 1.0).abs() < 1e-9);
        assert_eq!(v.value(&[1.3], 1.0), 0.0);
    }

    #[test]
    fn modified_functional_reductions() {
        let p = GaussianLaw::new(Vector::from_vec(vec![0.5, -0.2]), Mat::from_row_slice(2, 2, &[1.2, 0.1, 0.1, 0.8])).unwrap();
        let q = GaussianLaw::standard(2);
        let kl = gaussian_kl(&p, &q).unwrap();
        assert!((gaussian_modified_functional(&p, &q, 0.0, 0.0, 0.0).unwrap() - kl).abs() < 1e-15);
        assert!(gaussian_modified_functional(&q, &q, 1.0, 0.5, 1.0).unwrap().abs() < 1e-15);
        assert!(gaussian_modified_functional(&p, &q, 1.0, 0.5, 1.0).unwrap() > kl);
    }

    #[test]
    fn sampling_matches_covariance() {
        let law = GaussianLaw::new(Vector::from_vec(vec![1.0, -1.0]), Mat::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5])).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let mut acc = [0.0; 5];
        let mut z = [0.0; 2];
        for _ in 0..n {
            law.sample(&mut rng, &mut z);
            acc[0] += z[0];
            acc[1] += z[1];
            acc[2] += (z[0] - 1.0) * (z[0] - 1.0);
            acc[3] += (z[0] - 1.0) * (z[1] + 1.0);
            acc[4] += (z[1] + 1.0) * (z[1] + 1.0);
        }
        let nf = n as f64;
        assert!((acc[0] / nf - 1.0).abs() < 0.02);
        assert!((acc[2] / nf - 2.0).abs() < 0.03);
        assert!((acc[3] / nf - 0.6).abs() < 0.02);
        assert!((acc[4] / nf - 0.5).abs() < 0.01);
    }
}

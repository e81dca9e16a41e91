//! Densities on uniform tensor grids (cell-centered, one or two axes).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::linalg::{Mat, Vector};
use crate::math::{exp, floor};

/// Uniform axis of `cells` cells covering `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub cells: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, cells: usize) -> Self {
        assert!(max > min && cells >= 2, "axis needs max > min and at least two cells");
        Self { min, max, cells }
    }

    /// Axis centered at `center` with the given half-width.
    pub fn centered(center: f64, half_width: f64, cells: usize) -> Self {
        Self::new(center - half_width, center + half_width, cells)
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.spacing()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.center(i)).collect()
    }

    /// Same box with twice as many cells.
    pub fn refined(&self) -> Self {
        Self { cells: 2 * self.cells, ..*self }
    }
}

/// Nonnegative cell values on a tensor grid, row-major with the last axis
/// fastest, stamped with a time.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
    pub time: f64,
}

impl GridDensity {
    pub fn from_values(axes: Vec<Axis>, values: Vec<f64>, time: f64) -> Result<Self> {
        let len: usize = axes.iter().map(|a| a.cells).product();
        if axes.is_empty() || axes.len() > 2 {
            return Err(invalid("grid densities support one or two axes"));
        }
        if values.len() != len {
            return Err(invalid("value count does not match the grid"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < -1e-14) {
            return Err(invalid("grid values must be finite and nonnegative"));
        }
        let values = values.into_iter().map(|v| v.max(0.0)).collect();
        Ok(Self { axes, values, time })
    }

    /// Normalized density `∝ exp(f(x))` sampled at cell centers.
    pub fn from_log_fn(axes: Vec<Axis>, time: f64, mut log_f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let len: usize = axes.iter().map(|a| a.cells).product();
        let mut logs = Vec::with_capacity(len);
        let mut x = vec![0.0; axes.len()];
        for k in 0..len {
            fill_center(&axes, k, &mut x);
            logs.push(log_f(&x));
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(invalid("log-density is not finite anywhere on the grid"));
        }
        let values = logs.into_iter().map(|l| exp(l - max)).collect();
        let mut g = Self::from_values(axes, values, time)?;
        g.normalize();
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    pub fn center(&self, k: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        fill_center(&self.axes, k, &mut x);
        x
    }

    /// Flat index of cell `(i, j)` on a two-axis grid.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.axes[1].cells + j
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn normalize(&mut self) {
        let m = self.mass();
        if m > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= m);
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> Vector {
        let d = self.dim();
        let mut m = Vector::zeros(d);
        let mut x = vec![0.0; d];
        for (k, v) in self.values.iter().enumerate() {
            fill_center(&self.axes, k, &mut x);
            for i in 0..d {
                m[i] += v * x[i];
            }
        }
        m * self.cell_volume() / self.mass()
    }

    pub fn covariance(&self) -> Mat {
        let d = self.dim();
        let mean = self.mean();
        let mut c = Mat::zeros(d, d);
        let mut x = vec![0.0; d];
        for (k, v) in self.values.iter().enumerate() {
            fill_center(&self.axes, k, &mut x);
            for i in 0..d {
                for j in 0..d {
                    c[(i, j)] += v * (x[i] - mean[i]) * (x[j] - mean[j]);
                }
            }
        }
        c * self.cell_volume() / self.mass()
    }

    /// One-axis marginal.
    pub fn marginal(&self, axis: usize) -> Result<GridDensity> {
        match (self.dim(), axis) {
            (1, 0) => Ok(self.clone()),
            (2, a) if a < 2 => {
                let (nq, np) = (self.axes[0].cells, self.axes[1].cells);
                let other = self.axes[1 - a].spacing();
                let values = if a == 0 {
                    (0..nq).map(|i| (0..np).map(|j| self.values[i * np + j]).sum::<f64>() * other).collect()
                } else {
                    (0..np).map(|j| (0..nq).map(|i| self.values[i * np + j]).sum::<f64>() * other).collect()
                };
                GridDensity::from_values(vec![self.axes[a]], values, self.time)
            }
            _ => Err(invalid("marginal axis out of range")),
        }
    }

    /// Multilinear interpolation between cell centers, clamped to the outermost centers.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let locate = |a: &Axis, v: f64| {
            let t = ((v - a.min) / a.spacing() - 0.5).clamp(0.0, (a.cells - 1) as f64);
            let i = (floor(t) as usize).min(a.cells - 2);
            (i, t - i as f64)
        };
        match self.dim() {
            1 => {
                let (i, w) = locate(&self.axes[0], x[0]);
                (1.0 - w) * self.values[i] + w * self.values[i + 1]
            }
            _ => {
                let (i, u) = locate(&self.axes[0], x[0]);
                let (j, w) = locate(&self.axes[1], x[1]);
                let v = |a, b| self.values[self.index(a, b)];
                (1.0 - u) * ((1.0 - w) * v(i, j) + w * v(i, j + 1)) + u * ((1.0 - w) * v(i + 1, j) + w * v(i + 1, j + 1))
            }
        }
    }

    /// `∫|ρ − ρ'|` on a common grid (the L¹ distance between the densities).
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        self.check_same_grid(other)?;
        let (m1, m2) = (self.mass(), other.mass());
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a / m1 - b / m2).abs()).sum::<f64>() * self.cell_volume())
    }

    pub(crate) fn check_same_grid(&self, other: &GridDensity) -> Result<()> {
        if self.axes != other.axes {
            return Err(invalid("densities live on different grids"));
        }
        Ok(())
    }

    /// Cumulative cell masses, used for inverse-CDF sampling.
    pub fn cumulative(&self) -> Vec<f64> {
        let total: f64 = self.values.iter().sum();
        let mut acc = 0.0;
        self.values
            .iter()
            .map(|v| {
                acc += v / total;
                acc
            })
            .collect()
    }
}

pub(crate) fn fill_center(axes: &[Axis], mut k: usize, x: &mut [f64]) {
    for d in (0..axes.len()).rev() {
        let n = axes[d].cells;
        x[d] = axes[d].center(k % n);
        k /= n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_grid_moments() {
        let g = GridDensity::from_log_fn(vec![Axis::new(-12.0, 12.0, 600)], 0.0, |x| -0.5 * (x[0] - 1.0) * (x[0] - 1.0)).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-14);
        assert!((g.mean()[0] - 1.0).abs() < 1e-10);
        // point samples of a smooth density: the midpoint sum is spectrally accurate
        assert!((g.covariance()[(0, 0)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_axis_layout_and_marginals() {
        let axes = vec![Axis::new(-8.0, 8.0, 80), Axis::new(-6.0, 6.0, 60)];
        let g = GridDensity::from_log_fn(axes, 0.0, |z| -0.5 * (z[0] - 0.5) * (z[0] - 0.5) - z[1] * z[1]).unwrap();
        let c = g.center(g.index(3, 7));
        assert_eq!(c, vec![g.axes[0].center(3), g.axes[1].center(7)]);
        let q = g.marginal(0).unwrap();
        assert!((q.mass() - 1.0).abs() < 1e-12);
        assert!((q.mean()[0] - 0.5).abs() < 1e-10);
        assert!((g.covariance()[(0, 1)]).abs() < 1e-12);
    }

    #[test]
    fn interpolation_reproduces_linear_data() {
        let axes = vec![Axis::new(0.0, 1.0, 10)];
        let values: Vec<f64> = axes[0].centers().iter().map(|x| 1.0 + x).collect();
        let g = GridDensity::from_values(axes, values, 0.0).unwrap();
        assert!((g.interpolate(&[0.52]) - 1.52).abs() < 1e-14);
    }
}

//! Small dense linear algebra helpers on top of `nalgebra`.

use alloc::format;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::math::sqrt;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetric_eigenvalues(m: &Mat) -> Vector {
    let mut vals = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    vals.as_mut_slice().sort_by(|a, b| a.total_cmp(b));
    vals
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    symmetric_eigenvalues(m)[0]
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * (1.0 + m.amax())
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &Mat) -> Result<Mat> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular(format!("not positive definite: {m}")))
}

pub fn spd_log_det(m: &Mat) -> Result<f64> {
    let c = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("not positive definite: {m}")))?;
    Ok(2.0 * c.l().diagonal().iter().map(|d| crate::math::ln(*d)).sum::<f64>())
}

pub fn inverse(m: &Mat) -> Result<Mat> {
    m.clone().try_inverse().ok_or_else(|| Error::Singular(format!("singular: {m}")))
}

/// Symmetric square root of a positive semidefinite matrix.
pub fn psd_sqrt(m: &Mat) -> Mat {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = eig.eigenvalues.map(|v| sqrt(v.max(0.0)));
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows() + b.nrows();
    let mut out = Mat::zeros(n, n);
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    out
}

/// Eigenvalues `(λ₁, λ₂)`, `λ₁ ≤ λ₂`, of the symmetric matrix `[[a, b], [b, c]]`.
pub fn sym2_eigenvalues(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let r = sqrt(0.25 * (a - c) * (a - c) + b * b);
    (mean - r, mean + r)
}

/// Solve a tridiagonal system in place (Thomas algorithm). `lower[0]` and
/// `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = alloc::vec![0.0; n];
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i + 1] * rhs[i + 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym2_matches_general_solver() {
        let (l1, l2) = sym2_eigenvalues(1.02, -0.09, 0.03);
        let m = Mat::from_row_slice(2, 2, &[1.02, -0.09, -0.09, 0.03]);
        let e = symmetric_eigenvalues(&m);
        assert!((l1 - e[0]).abs() < 1e-14 && (l2 - e[1]).abs() < 1e-14);
    }

    #[test]
    fn tridiagonal_solves() {
        let lower = [0.0, -1.0, -1.0];
        let diag = [2.0, 2.0, 2.0];
        let upper = [-1.0, -1.0, 0.0];
        let mut rhs = [1.0, 0.0, 1.0];
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
        for v in rhs {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = psd_sqrt(&m);
        assert!((&r * &r - m).amax() < 1e-12);
    }
}

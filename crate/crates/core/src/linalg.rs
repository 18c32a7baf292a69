//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Maximum modulus over the (complex) eigenvalues of a square matrix.
pub fn spectral_radius(m: &Mat) -> f64 {
    debug_assert!(m.is_square());
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * (1.0 + m.amax())
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    symmetrize(m).symmetric_eigenvalues().min()
}

pub fn max_sym_eigenvalue(m: &Mat) -> f64 {
    symmetrize(m).symmetric_eigenvalues().max()
}

/// Lower Cholesky factor of a symmetric positive semidefinite matrix.
///
/// Falls back to an eigenvalue square root when the matrix is singular, so
/// the returned factor `G` always satisfies `G Gᵀ ≈ M`.
pub fn psd_factor(m: &Mat) -> Mat {
    let sym = symmetrize(m);
    if let Some(chol) = sym.clone().cholesky() {
        return chol.l();
    }
    let eig = sym.symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        scaled.column_mut(j).scale_mut(s);
    }
    scaled
}

/// Symmetric square root and inverse square root of a positive definite matrix.
pub fn sqrt_and_inv_sqrt(m: &Mat) -> Option<(Mat, Mat)> {
    let eig = symmetrize(m).symmetric_eigen();
    if eig.eigenvalues.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let v = &eig.eigenvectors;
    let d = eig.eigenvalues.map(f64::sqrt);
    let di = d.map(|s| 1.0 / s);
    let sqrt = v * Mat::from_diagonal(&d) * v.transpose();
    let inv_sqrt = v * Mat::from_diagonal(&di) * v.transpose();
    Some((sqrt, inv_sqrt))
}

/// Solve `lhs * X = rhs` for symmetric positive definite `lhs`.
pub fn solve_spd(lhs: &Mat, rhs: &Mat) -> Result<Mat> {
    if lhs.nrows() != rhs.nrows() {
        return Err(dim_mismatch(
            "solve_spd",
            format!("{} rows", lhs.nrows()),
            format!("{} rows", rhs.nrows()),
        ));
    }
    match symmetrize(lhs).cholesky() {
        Some(chol) => Ok(chol.solve(rhs)),
        None => lhs
            .clone()
            .lu()
            .solve(rhs)
            .ok_or_else(|| Error::InvalidInput("singular system in solve_spd".into())),
    }
}

/// Numerical rank from singular values, relative tolerance.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// `[B, AB, ..., A^{n-1}B]`.
pub fn controllability_matrix(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = Mat::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    out
}

/// `[C; CA; ...; CA^{n-1}]`.
pub fn observability_matrix(a: &Mat, c: &Mat) -> Mat {
    let n = a.nrows();
    let p = c.nrows();
    let mut out = Mat::zeros(n * p, n);
    let mut block = c.clone();
    for k in 0..n {
        out.view_mut((k * p, 0), (p, n)).copy_from(&block);
        block = &block * a;
    }
    out
}

pub fn quad_form(m: &Mat, v: &Vector) -> f64 {
    v.dot(&(m * v))
}

/// Frobenius inner product `tr(Aᵀ B)`.
pub fn frobenius_dot(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidInput("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn scalar(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

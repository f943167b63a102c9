//! Small dense helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;

/// Inverse of a Hermitian positive-definite matrix, `None` if the Cholesky
/// factorization fails.
pub fn hermitian_inverse(a: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    Cholesky::new(a.clone()).map(|c| c.inverse())
}

/// log-determinant and inverse of a Hermitian positive-definite matrix.
pub fn hermitian_logdet_inverse(a: DMatrix<Complex64>) -> Option<(f64, DMatrix<Complex64>)> {
    let chol = Cholesky::new(a)?;
    let l = chol.l_dirty();
    let mut logdet = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)].re;
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        logdet += 2.0 * d.ln();
    }
    Some((logdet, chol.inverse()))
}

pub fn hermitian_min_eigenvalue(a: &DMatrix<Complex64>) -> f64 {
    let h = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn symmetric_min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let h = (a + a.transpose()) * 0.5;
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Lower-triangular `L` with `Lᵀ L = a` for symmetric positive-definite `a`.
pub fn reverse_cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let m = a.nrows();
    // J a J = C Cᵀ  ⇒  a = (J C J)(J Cᵀ J), and J Cᵀ J is lower triangular.
    let flipped = DMatrix::from_fn(m, m, |r, c| a[(m - 1 - r, m - 1 - c)]);
    let c = Cholesky::new(flipped)?.unpack();
    Some(DMatrix::from_fn(m, m, |r, col| c[(m - 1 - col, m - 1 - r)]))
}

/// Row-major nested copy of a matrix.
pub fn matrix_to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Square matrix from nested rows.
pub fn rows_to_square(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let m = rows.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
        return Err(format!("row {i} has length {}, expected {m}", r.len()));
    }
    Ok(DMatrix::from_fn(m, m, |r, c| rows[r][c]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reverse_cholesky_is_lower_and_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let l = reverse_cholesky(&a).unwrap();
        for r in 0..3 {
            for c in (r + 1)..3 {
                assert_eq!(l[(r, c)], 0.0);
            }
            assert!(l[(r, r)] > 0.0);
        }
        assert!((l.transpose() * &l - &a).norm() < 1e-12);
    }

    #[test]
    fn logdet_matches_product_of_eigenvalues() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]).map(|x| Complex64::new(x, 0.0));
        let (ld, inv) = hermitian_logdet_inverse(a.clone()).unwrap();
        assert!((ld - (2.0f64 - 0.25).ln()).abs() < 1e-14);
        assert!((inv * a - DMatrix::identity(2, 2)).norm() < 1e-14);
    }
}

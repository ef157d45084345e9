//! Small dense helpers on top of `faer`.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn frob(m: &Mat<C64>) -> f64 {
    m.norm_l2()
}

pub fn max_abs_diff(a: &Mat<C64>, b: &Mat<C64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut d: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            d = d.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    d
}

pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn vnorm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn col_vec(m: MatRef<'_, C64>, j: usize) -> Vec<C64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn mat_from_col(v: &[C64]) -> Mat<C64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn matvec(m: &Mat<C64>, v: &[C64]) -> Vec<C64> {
    let r = m * mat_from_col(v);
    col_vec(r.as_ref(), 0)
}

/// `(H + Hᴴ)/2`.
pub fn hermitize(h: &Mat<C64>) -> Mat<C64> {
    Mat::from_fn(h.nrows(), h.ncols(), |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5)
}

pub fn hermitian_defect(h: &Mat<C64>) -> f64 {
    max_abs_diff(h, &h.adjoint().to_owned())
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(h: &Mat<C64>) -> Result<Vec<f64>> {
    hermitize(h)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Solver(format!("{e:?}")))
}

/// Ascending eigenvalues and orthonormal eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(h: &Mat<C64>) -> Result<(Vec<f64>, Mat<C64>)> {
    let e = hermitize(h).self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
    let s = e.S();
    let vals = (0..h.nrows()).map(|i| s[i].re).collect();
    Ok((vals, e.U().to_owned()))
}

/// Singular values in nonincreasing order.
pub fn singular_values(m: &Mat<C64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    m.singular_values().map_err(|e| Error::Solver(format!("{e:?}")))
}

/// Numerical rank with threshold `rel_tol·σ_max`.
pub fn rank(m: &Mat<C64>, rel_tol: f64) -> Result<usize> {
    let s = singular_values(m)?;
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > rel_tol * top).count())
}

/// Orthonormal basis of the null space (right singular vectors with
/// `σ ≤ rel_tol·σ_max`, zero matrix counts as rank 0).
pub fn null_space(m: &Mat<C64>, rel_tol: f64) -> Result<Mat<C64>> {
    let ncols = m.ncols();
    if m.nrows() == 0 {
        return Ok(Mat::identity(ncols, ncols));
    }
    let svd = m.svd().map_err(|e| Error::Solver(format!("{e:?}")))?;
    let s = svd.S();
    let k = m.nrows().min(ncols);
    let top = if k > 0 { s[0].re } else { 0.0 };
    let r = if top == 0.0 { 0 } else { (0..k).filter(|&i| s[i].re > rel_tol * top).count() };
    let v = svd.V();
    Ok(Mat::from_fn(ncols, ncols - r, |i, j| v[(i, r + j)]))
}

/// Orthonormal basis of the column space (thin Householder QR; the input
/// must have full column rank).
pub fn thin_q(m: &Mat<C64>) -> Mat<C64> {
    m.qr().compute_thin_Q()
}

/// Diagonal scaling of rows, `diag(d)·M`.
pub fn scale_rows(m: &Mat<C64>, d: &[C64]) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)])
}

/// Select rows of `M`.
pub fn select_rows(m: &Mat<C64>, rows: &[usize]) -> Mat<C64> {
    Mat::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Select columns of `M`.
pub fn select_cols(m: &Mat<C64>, cols: &[usize]) -> Mat<C64> {
    Mat::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Horizontal concatenation.
pub fn hcat(blocks: &[&Mat<C64>]) -> Mat<C64> {
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut off = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows);
        out.as_mut().submatrix_mut(0, off, rows, b.ncols()).copy_from(b.as_ref());
        off += b.ncols();
    }
    out
}

/// Vertical concatenation.
pub fn vcat(blocks: &[&Mat<C64>]) -> Mat<C64> {
    let cols = blocks[0].ncols();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut off = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols);
        out.as_mut().submatrix_mut(off, 0, b.nrows(), cols).copy_from(b.as_ref());
        off += b.nrows();
    }
    out
}

/// 2×2 block matrix from four blocks.
pub fn block2(a: &Mat<C64>, b: &Mat<C64>, c: &Mat<C64>, d: &Mat<C64>) -> Mat<C64> {
    vcat(&[&hcat(&[a, b]), &hcat(&[c, d])])
}

/// Largest relative deviation of `QᴴQ` from the identity.
pub fn unitarity_defect(q: &Mat<C64>) -> f64 {
    let g = q.adjoint() * q;
    max_abs_diff(&g, &Mat::identity(q.ncols(), q.ncols()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_rank_one() {
        let m = Mat::<C64>::from_fn(3, 3, |i, j| C64::new((i + 1) as f64 * (j + 1) as f64, 0.0));
        assert_eq!(rank(&m, 1e-12).unwrap(), 1);
        let k = null_space(&m, 1e-12).unwrap();
        assert_eq!(k.ncols(), 2);
        assert!(frob(&(&m * &k)) < 1e-12);
        assert!(unitarity_defect(&k) < 1e-12);
    }

    #[test]
    fn concatenation() {
        let a = Mat::<C64>::identity(2, 2);
        let b = Mat::<C64>::zeros(2, 1);
        let h = hcat(&[&a, &b]);
        assert_eq!((h.nrows(), h.ncols()), (2, 3));
        let v = vcat(&[&h, &h]);
        assert_eq!((v.nrows(), v.ncols()), (4, 3));
        assert_eq!(v[(3, 1)], ONE);
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let h = Mat::<C64>::from_fn(4, 4, |i, j| {
            if i == j {
                C64::new(i as f64, 0.0)
            } else if i < j {
                C64::new(0.3, 0.1 * (i + j) as f64)
            } else {
                C64::new(0.3, -0.1 * (i + j) as f64)
            }
        });
        let (w, u) = hermitian_eigen(&h).unwrap();
        let d = Mat::<C64>::from_fn(4, 4, |i, j| if i == j { C64::new(w[i], 0.0) } else { ZERO });
        assert!(max_abs_diff(&(&u * &d * u.adjoint()), &h) < 1e-12);
    }
}

//! Small dense helpers on row-major slices. Dimensions in this crate are tiny
//! (typically 1–3), so plain loops beat a general matrix library in the hot
//! paths; nalgebra is used for inversion and factorisations.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// `out = A x` for a row-major `rows × cols` matrix.
#[inline]
pub fn matvec(a: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        let row = &a[i * cols..(i + 1) * cols];
        *o = row.iter().zip(x).map(|(r, v)| r * v).sum();
    }
}

/// `out += A x`.
#[inline]
pub fn matvec_add(a: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        let row = &a[i * cols..(i + 1) * cols];
        *o += row.iter().zip(x).map(|(r, v)| r * v).sum::<f64>();
    }
}

/// `out = A B` with `A: r × k`, `B: k × c`.
pub fn matmul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize, out: &mut [f64]) {
    for i in 0..r {
        for j in 0..c {
            let mut s = 0.0;
            for l in 0..k {
                s += a[i * k + l] * b[l * c + j];
            }
            out[i * c + j] = s;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn to_dmatrix(a: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, a)
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// 2-norm condition number via singular values; `inf` when singular.
pub fn condition_number(a: &[f64], n: usize) -> f64 {
    if a.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = to_dmatrix(a, n, n).singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Above this condition number a square matrix is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Inverse of a square row-major matrix with a conditioning check.
pub fn invert(a: &[f64], n: usize, t: f64) -> Result<Vec<f64>> {
    if n == 1 {
        let v = a[0];
        if !v.is_finite() || v.abs() < 1.0 / SINGULAR_CONDITION {
            return Err(Error::Singular {
                t,
                condition: if v == 0.0 { f64::INFINITY } else { 1.0 / v.abs() },
            });
        }
        return Ok(vec![1.0 / v]);
    }
    let cond = condition_number(a, n);
    if !(cond < SINGULAR_CONDITION) {
        return Err(Error::Singular { t, condition: cond });
    }
    let inv = to_dmatrix(a, n, n)
        .try_inverse()
        .ok_or(Error::Singular { t, condition: cond })?;
    Ok(from_dmatrix(&inv))
}

/// Symmetric PSD square root through an eigen-decomposition; negative
/// eigenvalues within round-off are clamped to zero.
pub fn psd_sqrt(a: &[f64], n: usize) -> Vec<f64> {
    let eig = to_dmatrix(a, n, n).symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    from_dmatrix(&root)
}

pub fn determinant(a: &[f64], n: usize) -> f64 {
    match n {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        _ => to_dmatrix(a, n, n).determinant(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_diagonal() {
        let inv = invert(&[2.0, 0.0, 0.0, 4.0], 2, 0.0).unwrap();
        assert_eq!(inv, vec![0.5, 0.0, 0.0, 0.25]);
    }

    #[test]
    fn singular_is_reported() {
        let e = invert(&[1.0, 2.0, 2.0, 4.0], 2, 0.5).unwrap_err();
        assert!(matches!(e, Error::Singular { .. }));
        assert!(invert(&[0.0], 1, 0.0).is_err());
    }

    #[test]
    fn psd_root_squares_back() {
        let a = [2.0, 0.5, 0.5, 1.0];
        let r = psd_sqrt(&a, 2);
        let mut sq = [0.0; 4];
        matmul(&r, &r, 2, 2, 2, &mut sq);
        for (x, y) in sq.iter().zip(a) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

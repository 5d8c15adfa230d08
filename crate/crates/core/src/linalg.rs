//! Dense linear-algebra helpers on top of `nalgebra`.
//!
//! The symmetric eigensolver is a cyclic Jacobi iteration. It is used for the
//! matrix exponential of graph Laplacians and for the negative-semidefiniteness
//! test of the composition conditions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const JACOBI_MAX_SWEEPS: usize = 100;

/// Result of a symmetric eigendecomposition `A = V diag(values) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored column-wise, matching `values`.
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::INFINITY)
    }
}

/// Largest absolute entry of `m` (0 for an empty matrix).
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest entrywise deviation `|m - mᵀ|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Only the upper triangle is trusted; the caller is responsible for
/// symmetry.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    let mut a = symmetrize(m);
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = max_abs(&a).max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            return Ok(sorted(a, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::Numerical(format!(
        "Jacobi iteration did not converge in {JACOBI_MAX_SWEEPS} sweeps"
    )))
}

fn sorted(a: DMatrix<f64>, v: DMatrix<f64>) -> SymmetricEigen {
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    SymmetricEigen { values, vectors }
}

/// Matrix exponential `e^{m}`.
///
/// Symmetric inputs go through the Jacobi eigendecomposition; anything else
/// falls back to nalgebra's scaling-and-squaring Padé exponential.
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension("matrix exponential of a non-square matrix".into()));
    }
    if asymmetry(m) <= 1e-14 * max_abs(m).max(1.0) {
        let eig = symmetric_eigen(m)?;
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            eig.values.len(),
            eig.values.iter().map(|l| l.exp()),
        ));
        let e = &eig.vectors * d * eig.vectors.transpose();
        Ok(symmetrize(&e))
    } else {
        Ok(m.clone().exp())
    }
}

/// Block-diagonal matrix from a list of (possibly empty or non-square) blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// `m · x` for a plain slice.
pub fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(m.ncols(), x.len());
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)] * x[c]).sum())
        .collect()
}

/// Quadratic form `zᵀ m z`.
pub fn quad_form(m: &DMatrix<f64>, z: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..z.len() {
        for j in 0..z.len() {
            acc += z[i] * m[(i, j)] * z[j];
        }
    }
    acc
}

/// Infinity norm of a vector.
pub fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Infinity norm of `a - b`.
pub fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Matrix from nested rows; all rows must have equal length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn jacobi_matches_nalgebra() {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                4.0, 1.0, -2.0, 0.5, 1.0, 3.0, 0.0, 0.2, -2.0, 0.0, 5.0, 1.5, 0.5, 0.2, 1.5, -1.0,
            ],
        );
        let ours = symmetric_eigen(&m).unwrap();
        let mut theirs: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (a, b) in ours.values.iter().zip(&theirs) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let recon =
            &ours.vectors * DMatrix::from_diagonal(&DVector::from_vec(ours.values.clone())) * ours.vectors.transpose();
        assert!(max_abs(&(recon - &m)) < 1e-12);
    }

    #[test]
    fn expm_symmetric_matches_pade() {
        let l = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        let m = -l * 0.7;
        let ours = expm(&m).unwrap();
        let pade = m.clone().exp();
        assert!(max_abs(&(ours - pade)) < 1e-12);
    }

    #[test]
    fn expm_nonsymmetric_fallback() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&m).unwrap();
        assert_abs_diff_eq!(e[(0, 1)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e[(1, 0)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn block_diag_layout() {
        let a = DMatrix::from_element(1, 2, 1.0);
        let b = DMatrix::from_element(2, 1, 2.0);
        let d = block_diag(&[a, b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(2, 2)], 2.0);
        assert_eq!(d[(0, 2)], 0.0);
    }
}

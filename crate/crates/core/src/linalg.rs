//! Small dense linear-algebra helpers shared by the estimators and tuners.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative tolerance on the smallest Cholesky pivot, measured against the
/// largest diagonal entry of the factored matrix.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Relative tolerance below which kernel-matrix eigenvalues are treated as zero.
pub const TOL_PSD: f64 = 1e-10;

/// Cholesky factor of a symmetric positive-definite matrix whose pivots all
/// passed the relative singularity check.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let scale = a.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if a.nrows() == 0 {
            return Err(Error::InvalidInput("empty system".into()));
        }
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::SingularNormalEquations { pivot: 0.0 });
        }
        let chol = Cholesky::new(a.clone()).ok_or(Error::SingularNormalEquations { pivot: 0.0 })?;
        let min_pivot = chol
            .l_dirty()
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |m, d| m.min(d * d));
        let rel = min_pivot / scale;
        if rel < SINGULAR_TOL {
            return Err(Error::SingularNormalEquations { pivot: rel });
        }
        Ok(Self { chol })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }
}

/// Solve `a x = b` for symmetric positive-definite `a`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(SpdFactor::new(a)?.solve(b))
}

/// Symmetric eigendecomposition with eigenvalues sorted in non-increasing
/// order; column `i` of the returned matrix is the eigenvector of value `i`.
pub fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Leading `k x k` block.
pub fn leading(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    m.view((0, 0), (k, k)).into_owned()
}

pub fn leading_vec(v: &DVector<f64>, k: usize) -> DVector<f64> {
    v.rows(0, k).into_owned()
}

/// Zero-pad a vector to length `n`.
pub fn pad(v: &DVector<f64>, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    out.rows_mut(0, v.len()).copy_from(v);
    out
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Log-spaced grid of `n` points from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_matrix_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            SpdFactor::new(&a),
            Err(Error::SingularNormalEquations { .. })
        ));
    }

    #[test]
    fn solves_small_system() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = spd_solve(&a, &b).unwrap();
        assert!((&a * x - b).norm() < 1e-14);
    }

    #[test]
    fn eigen_sorted_descending() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0]);
        let (vals, vecs) = sorted_symmetric_eigen(a.clone());
        assert_eq!(vals, vec![3.0, 2.0, 1.0]);
        let v0 = vecs.column(0);
        assert!((&a * v0 - v0 * 3.0).norm() < 1e-12);
    }

    #[test]
    fn logspace_endpoints() {
        let g = logspace(1e-3, 1e3, 50);
        assert_eq!(g.len(), 50);
        assert!((g[0] - 1e-3).abs() < 1e-15);
        assert!((g[49] - 1e3).abs() < 1e-9);
    }
}

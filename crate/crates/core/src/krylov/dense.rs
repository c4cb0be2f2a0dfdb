use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::sparse::CsrMatrix;

/// Dense Cholesky factor of a small symmetric positive semidefinite matrix.
///
/// Pivots below `1e-12 · max diag` are treated as null directions: the
/// corresponding solution component is set to zero, which makes the solve
/// a symmetric pseudo-inverse on the pinned subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCholesky {
    n: usize,
    /// Row-major lower triangle, `l[i * n + j]` for `j ≤ i`.
    l: Vec<f64>,
    null: Vec<bool>,
}

impl DenseCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<DenseCholesky> {
        let n = a.n_rows();
        if a.n_cols() != n {
            return Err(Error::DimensionMismatch {
                op: "dense Cholesky",
                expected: n,
                found: a.n_cols(),
            });
        }
        let mut l = vec![0.0; n * n];
        for (i, j, v) in a.triplets() {
            l[i * n + j] = v;
        }
        let max_diag = (0..n).map(|i| l[i * n + i].abs()).fold(0.0, f64::max);
        let tiny = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
        let mut null = vec![false; n];
        for j in 0..n {
            let mut d = l[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= tiny {
                if d < -1e-8 * max_diag {
                    return Err(Error::Singular(alloc::format!(
                        "coarse matrix is indefinite at pivot {j} ({d:e})"
                    )));
                }
                null[j] = true;
                for i in j..n {
                    l[i * n + j] = 0.0;
                }
                continue;
            }
            let djj = sqrt(d);
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = l[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        // The strict upper triangle still holds input values; clear it.
        for i in 0..n {
            for j in i + 1..n {
                l[i * n + j] = 0.0;
            }
        }
        Ok(DenseCholesky { n, l, null })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn null_pivots(&self) -> usize {
        self.null.iter().filter(|&&z| z).count()
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        x.copy_from_slice(b);
        for i in 0..n {
            if self.null[i] {
                x[i] = 0.0;
                continue;
            }
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[i * n + k] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            if self.null[i] {
                x[i] = 0.0;
                continue;
            }
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = CsrMatrix::from_dense(&[
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ]);
        let chol = DenseCholesky::factor(&a).unwrap();
        let b = [1.0, 2.0, 3.0];
        let mut x = [0.0; 3];
        chol.solve_into(&b, &mut x);
        let ax = a.spmv(&x).unwrap();
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
        assert_eq!(chol.null_pivots(), 0);
    }

    #[test]
    fn zero_pivot_becomes_null_direction() {
        let a = CsrMatrix::from_dense(&[vec![2.0, 0.0], vec![0.0, 0.0]]);
        let chol = DenseCholesky::factor(&a).unwrap();
        let mut x = [0.0; 2];
        chol.solve_into(&[4.0, 7.0], &mut x);
        assert!((x[0] - 2.0).abs() < 1e-15 && x[1] == 0.0);
        assert_eq!(chol.null_pivots(), 1);
        let bad = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        assert!(DenseCholesky::factor(&bad).is_err());
    }
}

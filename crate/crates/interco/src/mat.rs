//! Small dense symmetric matrices and the factorizations the pricing kernel
//! needs. Dimensions here are tiny (number of fuels plus two), so everything
//! is plain row-major `Vec<f64>` with no external linear algebra.

use crate::error::{Error, Result};

/// Symmetric `n x n` matrix, stored dense row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds from full row-major data, checking symmetry.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "matrix data length {} does not match dimension {n}",
                data.len()
            )));
        }
        let m = SymMatrix { n, data };
        for i in 0..n {
            for j in (i + 1)..n {
                let a = m.get(i, j);
                let b = m.get(j, i);
                let scale = 1.0 + a.abs().max(b.abs());
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// `v' M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.n);
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                acc += v[i] * self.get(i, j) * v[j];
            }
        }
        acc
    }

    /// Congruence `A M A'` for a rectangular `A` given as rows of length `n`.
    pub fn congruence(&self, rows: &[Vec<f64>]) -> SymMatrix {
        let r = rows.len();
        let mut out = SymMatrix::zeros(r);
        // tmp[i] = rows[i] * M
        let tmp: Vec<Vec<f64>> = rows.iter().map(|row| self.mat_vec(row)).collect();
        for i in 0..r {
            for j in i..r {
                let v: f64 = (0..self.n).map(|k| tmp[i][k] * rows[j][k]).sum();
                out.set(i, j, v);
            }
        }
        out
    }

    /// Cholesky factor `L` (lower, row-major dense) tolerating positive
    /// *semi*-definite input: pivots within `tol * max_diag` of zero produce a
    /// zero row. Fails if a pivot is negative beyond that tolerance.
    pub fn cholesky_psd(&self, rel_tol: f64) -> Result<Vec<f64>> {
        let n = self.n;
        let scale = (0..n)
            .map(|i| self.get(i, i))
            .fold(0.0_f64, |a, b| a.max(b))
            .max(0.0);
        let tol = rel_tol * scale.max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s < -tol {
                        return Err(Error::Numerics(format!(
                            "matrix is not positive semidefinite (pivot {s:.3e} at {i})"
                        )));
                    }
                    l[i * n + i] = if s > tol { s.sqrt() } else { 0.0 };
                } else {
                    let d = l[j * n + j];
                    l[i * n + j] = if d > 0.0 { s / d } else { 0.0 };
                }
            }
        }
        Ok(l)
    }

    /// Positive semidefiniteness check with relative tolerance.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        self.cholesky_psd(rel_tol).is_ok()
    }
}

/// `L v` for a dense row-major lower-triangular factor as produced by
/// [`SymMatrix::cholesky_psd`].
pub fn lower_tri_mat_vec(l: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| (0..=i).map(|j| l[i * n + j] * v[j]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_recovers_spd_matrix() {
        let m = SymMatrix::from_rows(2, vec![4.0, 2.0, 2.0, 3.0]).unwrap();
        let l = m.cholesky_psd(1e-12).unwrap();
        // L L' == M
        for i in 0..2 {
            for j in 0..2 {
                let v: f64 = (0..2).map(|k| l[i * 2 + k] * l[j * 2 + k]).sum();
                assert_relative_eq!(v, m.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_handles_semidefinite() {
        // Rank-1 matrix from duplicated direction.
        let m = SymMatrix::from_rows(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let l = m.cholesky_psd(1e-12).unwrap();
        assert_relative_eq!(l[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(l[2], 1.0, epsilon = 1e-14);
        assert_eq!(l[3], 0.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = SymMatrix::from_rows(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(m.cholesky_psd(1e-12).is_err());
        assert!(!m.is_psd(1e-12));
    }

    #[test]
    fn congruence_matches_direct_product() {
        let m = SymMatrix::from_rows(3, vec![2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 3.0]).unwrap();
        let rows = vec![vec![1.0, -1.0, 0.0], vec![0.0, 2.0, 1.0]];
        let p = m.congruence(&rows);
        assert_relative_eq!(p.get(0, 0), m.quad_form(&rows[0]), epsilon = 1e-12);
        assert_relative_eq!(p.get(1, 1), m.quad_form(&rows[1]), epsilon = 1e-12);
        // cross term computed by hand: rows0 * M * rows1'
        let mv = m.mat_vec(&rows[1]);
        let cross: f64 = rows[0].iter().zip(&mv).map(|(a, b)| a * b).sum();
        assert_relative_eq!(p.get(0, 1), cross, epsilon = 1e-12);
    }
}

use nalgebra::{DMatrix, SymmetricEigen};

use super::SketchError;
use crate::linalg::{axpy, dot, Matrix};

/// Frequent Directions sketch with a `2ℓ`-row buffer. When the buffer fills,
/// the squared singular values are shifted down by the `ℓ`-th largest one,
/// which leaves at most `ℓ − 1` nonzero rows.
///
/// For the stream `A` seen so far, `0 ⪯ AᵀA − BᵀB ⪯ δ·I` where `δ` is
/// [`error_bound`](Self::error_bound), and `δ ≤ ‖A‖_F² / ℓ`.
#[derive(Clone, Debug)]
pub struct FrequentDirections {
    ell: usize,
    dim: usize,
    rows: Vec<Vec<f64>>,
    shrink_total: f64,
    flops: u64,
}

impl FrequentDirections {
    pub fn new(ell: usize, dim: usize) -> Result<Self, SketchError> {
        if ell < 2 {
            return Err(SketchError::SketchTooSmall { min: 2, got: ell });
        }
        Ok(Self {
            ell,
            dim,
            rows: Vec::with_capacity(2 * ell),
            shrink_total: 0.0,
            flops: 0,
        })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn insert(&mut self, row: &[f64]) -> Result<(), SketchError> {
        if row.len() != self.dim {
            return Err(SketchError::DimensionMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        self.flops += self.dim as u64;
        self.rows.push(row.to_vec());
        if self.rows.len() == 2 * self.ell {
            self.shrink();
        }
        Ok(())
    }

    fn shrink(&mut self) {
        let n = self.rows.len();
        let (vals, vecs) = self.row_eigen();
        let delta = vals[self.ell - 1].max(0.0);
        let mut next = Vec::with_capacity(self.ell);
        for (idx, &lambda) in vals.iter().enumerate().take(self.ell - 1) {
            if lambda <= delta {
                break;
            }
            let c = ((lambda - delta) / lambda).sqrt();
            let mut out = vec![0.0; self.dim];
            for r in 0..n {
                axpy(c * vecs[idx][r], &self.rows[r], &mut out);
            }
            next.push(out);
        }
        self.flops += (n * n * self.dim + n * n * n + next.len() * n * self.dim) as u64;
        self.shrink_total += delta;
        self.rows = next;
    }

    /// Eigenpairs of `B Bᵀ`, sorted by decreasing eigenvalue. Each
    /// eigenvector is returned as a coefficient vector over the buffer rows.
    fn row_eigen(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.rows.len();
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = dot(&self.rows[i], &self.rows[j]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs = order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect();
        (vals, vecs)
    }

    /// Current sketch rows (at most `2ℓ − 1`); a zero-row matrix for an
    /// empty stream.
    pub fn sketch(&self) -> Matrix {
        Matrix::from_rows(&self.rows).unwrap_or_else(|| Matrix::zeros(0, self.dim))
    }

    /// Total shrinkage so far; bounds `‖AᵀA − BᵀB‖₂`.
    pub fn error_bound(&self) -> f64 {
        self.shrink_total
    }

    /// Operation count of every insert and shrink so far.
    pub fn flops(&self) -> u64 {
        self.flops
    }

    /// Orthonormal basis (as rows) of the sketch's row space, by modified
    /// Gram-Schmidt applied twice.
    pub fn basis(&self) -> Matrix {
        let scale = self.rows.iter().map(|r| dot(r, r)).fold(0.0, f64::max).sqrt();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for r in &self.rows {
            let mut v = r.clone();
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(&v, q);
                    axpy(-c, q, &mut v);
                }
            }
            let n = dot(&v, &v).sqrt();
            if n > 1e-10 * scale && n > 0.0 {
                v.iter_mut().for_each(|x| *x /= n);
                basis.push(v);
            }
        }
        Matrix::from_rows(&basis).unwrap_or_else(|| Matrix::zeros(0, self.dim))
    }

    /// Coordinates of each row of `m` in the sketch basis (`K × q`), i.e.
    /// the rows projected onto the sketch's row space.
    pub fn project(&self, m: &Matrix) -> Matrix {
        let q = self.basis();
        let mut out = Matrix::zeros(m.rows(), q.rows());
        for i in 0..m.rows() {
            for j in 0..q.rows() {
                out.set(i, j, dot(m.row(i), q.row(j)));
            }
        }
        out
    }
}

/// Worst-case cosine perturbation after projecting onto the sketch span,
/// given the spectral bound `e` and the smallest row norm `m`. Each squared
/// norm loses at most `e` and each inner product moves by at most `e`, so
/// `|Δcos| ≤ 2e / (m² − e)`. Infinite when `e ≥ m²`.
pub fn cosine_error_bound(e: f64, min_norm: f64) -> f64 {
    let m2 = min_norm * min_norm;
    if e <= 0.0 {
        0.0
    } else if e >= m2 {
        f64::INFINITY
    } else {
        2.0 * e / (m2 - e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ell_below_two_rejected() {
        assert!(FrequentDirections::new(1, 4).is_err());
    }

    #[test]
    fn empty_stream_is_zero_sketch() {
        let fd = FrequentDirections::new(2, 3).unwrap();
        assert_eq!(fd.sketch().rows(), 0);
        assert_eq!(fd.error_bound(), 0.0);
    }

    #[test]
    fn rank_one_stream_lossless() {
        let mut fd = FrequentDirections::new(2, 3).unwrap();
        for _ in 0..9 {
            fd.insert(&[1.0, 2.0, 2.0]).unwrap();
        }
        let b = fd.sketch();
        // BᵀB must equal 9 · vvᵀ.
        let mut btb = [[0.0; 3]; 3];
        for r in b.iter_rows() {
            for i in 0..3 {
                for j in 0..3 {
                    btb[i][j] += r[i] * r[j];
                }
            }
        }
        let v = [1.0, 2.0, 2.0];
        for i in 0..3 {
            for j in 0..3 {
                assert!((btb[i][j] - 9.0 * v[i] * v[j]).abs() < 1e-9);
            }
        }
        assert!(fd.error_bound() < 1e-9);
    }

    #[test]
    fn dimension_checked() {
        let mut fd = FrequentDirections::new(2, 3).unwrap();
        assert!(fd.insert(&[1.0]).is_err());
    }

    #[test]
    fn cosine_bound_cases() {
        assert_eq!(cosine_error_bound(0.0, 1.0), 0.0);
        assert!((cosine_error_bound(0.1, 1.0) - 0.2 / 0.9).abs() < 1e-15);
        assert!(cosine_error_bound(1.0, 1.0).is_infinite());
    }
}

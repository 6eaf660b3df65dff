//! Per-task EMA gradient buffers and the interference matrix built from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, Matrix};

/// Default norm floor ν below which a task is excluded from graph building.
pub const DEFAULT_NORM_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradStatsError {
    #[error("gradient for task {task} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        task: usize,
        expected: usize,
        got: usize,
    },
    #[error("task index {task} out of range for {num_tasks} tasks")]
    TaskOutOfRange { task: usize, num_tasks: usize },
    #[error("EMA parameter beta must lie in [0, 1), got {0}")]
    InvalidBeta(f64),
    #[error("norm floor must be finite and nonnegative, got {0}")]
    InvalidNormFloor(f64),
    #[error("probe window length must be at least 1")]
    EmptyWindow,
    #[error("degenerate interference matrix: only {included} task(s) above the norm floor")]
    DegenerateMatrix { included: usize },
}

/// EMA statistics for `K` tasks over a `d`-dimensional shared gradient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradStats {
    ema: Matrix,
    beta: f64,
    norm_floor: f64,
    updates: Vec<u64>,
    excluded: Vec<bool>,
}

impl GradStats {
    /// Zero-initialised buffers. Every task starts excluded because its EMA
    /// norm is zero.
    pub fn new(num_tasks: usize, dim: usize, beta: f64) -> Result<Self, GradStatsError> {
        Self::from_matrix(Matrix::zeros(num_tasks, dim), beta)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], beta: f64) -> Result<Self, GradStatsError> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        for (task, r) in rows.iter().enumerate() {
            if r.as_ref().len() != dim {
                return Err(GradStatsError::DimensionMismatch {
                    task,
                    expected: dim,
                    got: r.as_ref().len(),
                });
            }
        }
        let m = Matrix::from_rows(rows).expect("row lengths checked");
        Self::from_matrix(m, beta)
    }

    fn from_matrix(ema: Matrix, beta: f64) -> Result<Self, GradStatsError> {
        check_beta(beta)?;
        let k = ema.rows();
        let mut s = Self {
            ema,
            beta,
            norm_floor: DEFAULT_NORM_FLOOR,
            updates: vec![0; k],
            excluded: vec![false; k],
        };
        for i in 0..k {
            s.refresh_exclusion(i);
        }
        Ok(s)
    }

    pub fn with_norm_floor(mut self, nu: f64) -> Result<Self, GradStatsError> {
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(GradStatsError::InvalidNormFloor(nu));
        }
        self.norm_floor = nu;
        for i in 0..self.num_tasks() {
            self.refresh_exclusion(i);
        }
        Ok(self)
    }

    pub fn num_tasks(&self) -> usize {
        self.ema.rows()
    }

    pub fn dim(&self) -> usize {
        self.ema.cols()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn norm_floor(&self) -> f64 {
        self.norm_floor
    }

    pub fn row(&self, task: usize) -> &[f64] {
        self.ema.row(task)
    }

    pub fn ema_matrix(&self) -> &Matrix {
        &self.ema
    }

    pub fn is_excluded(&self, task: usize) -> bool {
        self.excluded[task]
    }

    pub fn excluded(&self) -> &[bool] {
        &self.excluded
    }

    pub fn included_mask(&self) -> Vec<bool> {
        self.excluded.iter().map(|e| !e).collect()
    }

    /// Number of updates applied to a row since construction. Doubles as the
    /// row version used by the incremental Gram cache.
    pub fn updates_since_reset(&self, task: usize) -> u64 {
        self.updates[task]
    }

    pub fn row_versions(&self) -> &[u64] {
        &self.updates
    }

    /// `row ← β·row + (1−β)·grad` for one task.
    pub fn update(&mut self, task: usize, grad: &[f64]) -> Result<(), GradStatsError> {
        let k = self.num_tasks();
        if task >= k {
            return Err(GradStatsError::TaskOutOfRange { task, num_tasks: k });
        }
        if grad.len() != self.dim() {
            return Err(GradStatsError::DimensionMismatch {
                task,
                expected: self.dim(),
                got: grad.len(),
            });
        }
        let b = self.beta;
        for (m, g) in self.ema.row_mut(task).iter_mut().zip(grad) {
            *m = b * *m + (1.0 - b) * g;
        }
        self.updates[task] += 1;
        self.refresh_exclusion(task);
        Ok(())
    }

    /// Resets every buffer to zero (used by probe-window experiments).
    pub fn reset(&mut self) {
        let (k, d) = (self.num_tasks(), self.dim());
        self.ema = Matrix::zeros(k, d);
        self.updates = vec![0; k];
        for i in 0..k {
            self.refresh_exclusion(i);
        }
    }

    fn refresh_exclusion(&mut self, task: usize) {
        let n = dot(self.ema.row(task), self.ema.row(task)).sqrt();
        self.excluded[task] = n < self.norm_floor || (self.norm_floor == 0.0 && n == 0.0);
    }

    /// Negated-cosine matrix over the non-excluded tasks.
    pub fn interference_matrix(&self) -> Result<InterferenceMatrix, GradStatsError> {
        InterferenceMatrix::from_gram(&self.ema.gram(), self.included_mask())
    }
}

fn check_beta(beta: f64) -> Result<(), GradStatsError> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(GradStatsError::InvalidBeta(beta))
    }
}

/// Effective sample size of a normalised EMA over a window of `window`
/// samples: the inverse of the sum of squared weights.
pub fn effective_sample_size(beta: f64, window: u64) -> Result<f64, GradStatsError> {
    check_beta(beta)?;
    if window == 0 {
        return Err(GradStatsError::EmptyWindow);
    }
    if beta == 0.0 {
        return Ok(1.0);
    }
    let r = window as f64;
    // n_eff = (1−β^R)²(1−β²) / ((1−β)²(1−β^{2R})), written with exp_m1 so
    // that β close to 1 keeps its precision.
    let one_minus_br = -(r * beta.ln()).exp_m1();
    let one_minus_b2r = -(2.0 * r * beta.ln()).exp_m1();
    let one_minus_b = 1.0 - beta;
    let one_minus_b2 = one_minus_b * (1.0 + beta);
    Ok(one_minus_br * one_minus_br * one_minus_b2 / (one_minus_b * one_minus_b * one_minus_b2r))
}

/// `(1+β)/(1−β)`, the large-window limit of [`effective_sample_size`].
pub fn effective_sample_size_limit(beta: f64) -> Result<f64, GradStatsError> {
    check_beta(beta)?;
    Ok((1.0 + beta) / (1.0 - beta))
}

/// Pairwise interference coefficients `ρ_ij = −cos(g̃_i, g̃_j)`.
///
/// Entries touching an excluded task are stored as `0.0` and reported as
/// `None` by [`InterferenceMatrix::get`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterferenceMatrix {
    rho: Matrix,
    included: Vec<bool>,
}

impl InterferenceMatrix {
    /// Builds ρ from a Gram matrix of (possibly sketched) EMA rows and an
    /// inclusion mask.
    pub fn from_gram(gram: &Matrix, included: Vec<bool>) -> Result<Self, GradStatsError> {
        let k = gram.rows();
        assert_eq!(k, gram.cols(), "gram must be square");
        assert_eq!(k, included.len(), "mask length must match gram");
        let n_inc = included.iter().filter(|&&b| b).count();
        if n_inc < 2 {
            return Err(GradStatsError::DegenerateMatrix { included: n_inc });
        }
        let norms: Vec<f64> = (0..k).map(|i| gram.get(i, i).max(0.0).sqrt()).collect();
        let mut rho = Matrix::zeros(k, k);
        for i in 0..k {
            if !included[i] {
                continue;
            }
            rho.set(i, i, -1.0);
            for j in (i + 1)..k {
                if !included[j] {
                    continue;
                }
                let denom = norms[i] * norms[j];
                let v = if denom > 0.0 { -gram.get(i, j) / denom } else { 0.0 };
                rho.set(i, j, v);
                rho.set(j, i, v);
            }
        }
        Ok(Self { rho, included })
    }

    pub fn num_tasks(&self) -> usize {
        self.included.len()
    }

    /// `ρ_ij`, or `None` if either task is excluded.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        (self.included[i] && self.included[j]).then(|| self.rho.get(i, j))
    }

    pub fn is_included(&self, i: usize) -> bool {
        self.included[i]
    }

    pub fn included_mask(&self) -> &[bool] {
        &self.included
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.rho
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn beta_zero_takes_latest() {
        let mut s = GradStats::from_rows(&[vec![5.0, 5.0]], 0.0).unwrap();
        s.update(0, &[1.0, 2.0]).unwrap();
        assert_eq!(s.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn beta_half_from_zero() {
        let mut s = GradStats::new(1, 2, 0.5).unwrap();
        s.update(0, &[2.0, 4.0]).unwrap();
        assert_eq!(s.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn fixed_point_when_grad_equals_ema() {
        let mut s = GradStats::from_rows(&[vec![1.0, 0.0]], 0.9).unwrap();
        s.update(0, &[1.0, 0.0]).unwrap();
        assert!(close(s.row(0)[0], 1.0, 1e-15));
        assert_eq!(s.row(0)[1], 0.0);
    }

    #[test]
    fn other_rows_untouched() {
        let mut s = GradStats::from_rows(&[vec![1.0, 1.0], vec![3.0, 4.0]], 0.5).unwrap();
        s.update(0, &[0.0, 0.0]).unwrap();
        assert_eq!(s.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn dimension_mismatch_reports_sizes() {
        let mut s = GradStats::new(2, 3, 0.5).unwrap();
        let err = s.update(1, &[1.0, 2.0]).unwrap_err();
        assert_eq!(
            err,
            GradStatsError::DimensionMismatch {
                task: 1,
                expected: 3,
                got: 2
            }
        );
        assert!(err.to_string().contains("dimension 2, expected 3"));
        assert!(matches!(
            s.update(7, &[0.0; 3]),
            Err(GradStatsError::TaskOutOfRange { task: 7, .. })
        ));
    }

    #[test]
    fn invalid_beta_rejected() {
        assert!(GradStats::new(2, 2, 1.0).is_err());
        assert!(GradStats::new(2, 2, -0.1).is_err());
        assert!(effective_sample_size(1.0, 4).is_err());
        assert!(effective_sample_size(0.5, 0).is_err());
    }

    #[test]
    fn exclusion_tracks_norm_floor() {
        let mut s = GradStats::new(2, 2, 0.0).unwrap();
        assert!(s.is_excluded(0) && s.is_excluded(1));
        s.update(0, &[1e-9, 0.0]).unwrap();
        assert!(s.is_excluded(0));
        s.update(0, &[1e-3, 0.0]).unwrap();
        assert!(!s.is_excluded(0));
        let s = s.with_norm_floor(1e-2).unwrap();
        assert!(s.is_excluded(0));
    }

    #[test]
    fn n_eff_examples() {
        assert_eq!(effective_sample_size(0.0, 10).unwrap(), 1.0);
        // w = (1/3, 2/3), Σw² = 5/9
        assert!(close(effective_sample_size(0.5, 2).unwrap(), 1.8, 1e-12));
        assert!(close(effective_sample_size(0.5, 200).unwrap(), 3.0, 1e-12));
        assert_eq!(effective_sample_size_limit(0.5).unwrap(), 3.0);
    }

    #[test]
    fn n_eff_matches_weight_sum() {
        for &(beta, r) in &[(0.3_f64, 1u64), (0.7, 5), (0.95, 40), (0.999, 3)] {
            let ws: Vec<f64> = (1..=r)
                .map(|t| (1.0 - beta) * beta.powi((r - t) as i32) / (1.0 - beta.powi(r as i32)))
                .collect();
            let inv: f64 = ws.iter().map(|w| w * w).sum();
            let got = effective_sample_size(beta, r).unwrap();
            assert!(close(got, 1.0 / inv, 1e-9 * got), "beta={beta} r={r}");
        }
    }

    #[test]
    fn interference_examples() {
        let s = GradStats::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0.5).unwrap();
        assert_eq!(s.interference_matrix().unwrap().get(0, 1), Some(0.0));

        let s = GradStats::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]], 0.5).unwrap();
        assert_eq!(s.interference_matrix().unwrap().get(0, 1), Some(1.0));

        let s = GradStats::from_rows(&[vec![1.0, 0.0], vec![-0.5, 0.8660254]], 0.5).unwrap();
        let rho = s.interference_matrix().unwrap();
        assert!(close(rho.get(0, 1).unwrap(), 0.5, 1e-7));
        assert_eq!(rho.get(0, 0), Some(-1.0));
    }

    #[test]
    fn excluded_tasks_have_no_entries() {
        let s = GradStats::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]], 0.5).unwrap();
        let rho = s.interference_matrix().unwrap();
        assert_eq!(rho.get(0, 1), None);
        assert_eq!(rho.get(0, 2), Some(0.0));
        assert!(!rho.is_included(1));
    }

    #[test]
    fn degenerate_when_fewer_than_two_included() {
        let s = GradStats::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]], 0.5).unwrap();
        assert_eq!(
            s.interference_matrix().unwrap_err(),
            GradStatsError::DegenerateMatrix { included: 1 }
        );
    }
}

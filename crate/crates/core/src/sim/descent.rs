use serde::{Deserialize, Serialize};

use crate::linalg::{dot, sum_vectors};

/// Both lower bounds on `‖Σ g_k‖²` for one gradient set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentCheck {
    /// `‖Σ g_k‖²`
    pub lhs: f64,
    /// `Σ ‖g_k‖²`
    pub sum_sq: f64,
    /// `(1 − τ(|S|−1)) Σ‖g_k‖²`, present only when the set is τ-compatible.
    pub rhs_worst_case: Option<f64>,
    /// `(1 − τ_eff) Σ‖g_k‖²`
    pub rhs_data_dependent: f64,
    pub tau_eff: f64,
    pub compatible: bool,
    pub ok: bool,
}

/// Aggregate conflict ratio `Σ_{i≠j} (−⟨g_i, g_j⟩)₊ / Σ_k ‖g_k‖²` over
/// ordered pairs; 0 for an all-zero set.
pub fn tau_eff(grads: &[Vec<f64>]) -> f64 {
    let sum_sq: f64 = grads.iter().map(|g| dot(g, g)).sum();
    if sum_sq == 0.0 {
        return 0.0;
    }
    let mut neg = 0.0;
    for i in 0..grads.len() {
        for j in (i + 1)..grads.len() {
            neg += 2.0 * (-dot(&grads[i], &grads[j])).max(0.0);
        }
    }
    neg / sum_sq
}

/// True when every pair satisfies `⟨g_i, g_j⟩ ≥ −τ ‖g_i‖ ‖g_j‖`.
pub fn is_tau_compatible(grads: &[Vec<f64>], tau: f64) -> bool {
    let norms: Vec<f64> = grads.iter().map(|g| dot(g, g).sqrt()).collect();
    (0..grads.len()).all(|i| ((i + 1)..grads.len()).all(|j| dot(&grads[i], &grads[j]) >= -tau * norms[i] * norms[j]))
}

/// Evaluates both descent bounds. `ok` holds when `lhs` meets every
/// applicable bound up to `rel_tol · Σ‖g_k‖²`.
pub fn descent_check(grads: &[Vec<f64>], tau: f64, rel_tol: f64) -> DescentCheck {
    let dim = grads.first().map_or(0, Vec::len);
    let total = sum_vectors(dim, grads.iter().map(Vec::as_slice));
    let lhs = dot(&total, &total);
    let sum_sq: f64 = grads.iter().map(|g| dot(g, g)).sum();
    let te = tau_eff(grads);
    let compatible = is_tau_compatible(grads, tau);
    let rhs_worst_case =
        compatible.then(|| (1.0 - tau * (grads.len().saturating_sub(1)) as f64) * sum_sq);
    let rhs_data_dependent = (1.0 - te) * sum_sq;
    let slack = rel_tol * sum_sq;
    let ok = lhs + slack >= rhs_data_dependent && rhs_worst_case.is_none_or(|r| lhs + slack >= r);
    DescentCheck {
        lhs,
        sum_sq,
        rhs_worst_case,
        rhs_data_dependent,
        tau_eff: te,
        compatible,
        ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_equality() {
        let c = descent_check(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0.0, 0.0);
        assert_eq!(c.lhs, 2.0);
        assert_eq!(c.rhs_worst_case, Some(2.0));
        assert_eq!(c.rhs_data_dependent, 2.0);
        assert!(c.ok);
    }

    #[test]
    fn sixty_degree_pair() {
        let c = descent_check(&[vec![1.0, 0.0], vec![-0.5, 0.8660254]], 0.5, 1e-9);
        assert!((c.tau_eff - 0.5).abs() < 1e-7);
        assert!((c.lhs - 1.0).abs() < 1e-7);
        assert!((c.rhs_data_dependent - 1.0).abs() < 1e-7);
        assert!(c.ok);
    }

    #[test]
    fn antipodal_is_not_compatible() {
        let c = descent_check(&[vec![1.0], vec![-1.0]], 0.5, 0.0);
        assert!(!c.compatible);
        assert_eq!(c.rhs_worst_case, None);
        assert_eq!(c.lhs, 0.0);
        assert_eq!(c.rhs_data_dependent, 0.0);
        assert!(c.ok);
    }

    #[test]
    fn empty_set() {
        let c = descent_check(&[], 0.3, 0.0);
        assert_eq!((c.lhs, c.sum_sq, c.tau_eff), (0.0, 0.0, 0.0));
        assert!(c.ok);
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::linalg::{axpy, dot, norm, sym_spectral_norm, Matrix};

/// `L_k(θ) = ½ (θ − θ*_k)ᵀ H_k (θ − θ*_k)` with `H_k` symmetric PSD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticTask {
    pub hessian: Matrix,
    pub optimum: Vec<f64>,
}

impl QuadraticTask {
    pub fn loss(&self, theta: &[f64]) -> f64 {
        let diff: Vec<f64> = theta.iter().zip(&self.optimum).map(|(a, b)| a - b).collect();
        0.5 * dot(&diff, &mat_vec(&self.hessian, &diff))
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = theta.iter().zip(&self.optimum).map(|(a, b)| a - b).collect();
        mat_vec(&self.hessian, &diff)
    }
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    m.iter_rows().map(|r| dot(r, v)).collect()
}

/// Sum of quadratic task losses. `F` is `L`-smooth with
/// `L = Σ_k ‖H_k‖₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticMTL {
    tasks: Vec<QuadraticTask>,
    dim: usize,
    lipschitz: f64,
}

impl QuadraticMTL {
    pub fn new(tasks: Vec<QuadraticTask>) -> Result<Self, SimError> {
        let dim = tasks.first().map_or(0, |t| t.optimum.len());
        for (k, t) in tasks.iter().enumerate() {
            let h = &t.hessian;
            if h.rows() != dim || h.cols() != dim || t.optimum.len() != dim {
                return Err(SimError::invalid("hessian", format!("task {k} is not {dim}×{dim}")));
            }
            for i in 0..dim {
                for j in 0..i {
                    if (h.get(i, j) - h.get(j, i)).abs() > 1e-12 {
                        return Err(SimError::invalid("hessian", format!("task {k} is not symmetric")));
                    }
                }
            }
            let dm = nalgebra::DMatrix::from_row_slice(dim, dim, h.as_slice());
            let min_eig = nalgebra::SymmetricEigen::new(dm).eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            if min_eig < -1e-10 {
                return Err(SimError::invalid("hessian", format!("task {k} has eigenvalue {min_eig} < 0")));
            }
        }
        let lipschitz = tasks.iter().map(|t| sym_spectral_norm(&t.hessian)).sum();
        Ok(Self { tasks, dim, lipschitz })
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn task(&self, k: usize) -> &QuadraticTask {
        &self.tasks[k]
    }

    /// `L = Σ_k ‖H_k‖₂`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        self.tasks.iter().map(|t| t.loss(theta)).sum()
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.group_gradient(&(0..self.num_tasks()).collect::<Vec<_>>(), theta)
    }

    /// `G_r(θ) = Σ_{k ∈ group} ∇L_k(θ)`.
    pub fn group_gradient(&self, group: &[usize], theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &k in group {
            axpy(1.0, &self.tasks[k].gradient(theta), &mut out);
        }
        out
    }

    pub fn group_hessian(&self, group: &[usize]) -> Matrix {
        let mut h = Matrix::zeros(self.dim, self.dim);
        for &k in group {
            for i in 0..self.dim {
                axpy(1.0, self.tasks[k].hessian.row(i), h.row_mut(i));
            }
        }
        h
    }

    /// Lipschitz constant of `G_r`: `‖Σ_{k∈group} H_k‖₂`.
    pub fn group_lipschitz(&self, group: &[usize]) -> f64 {
        sym_spectral_norm(&self.group_hessian(group))
    }

    fn check_eta(&self, eta: f64) -> Result<(), SimError> {
        let limit = 1.0 / self.lipschitz;
        if !(eta > 0.0 && eta <= limit) {
            return Err(SimError::StepOutOfRange { eta, limit });
        }
        Ok(())
    }

    /// `θ − η Σ_r G_r(θ)`; requires `η ∈ (0, 1/L]`.
    pub fn aggregated_step(&self, theta: &[f64], groups: &[Vec<usize>], eta: f64) -> Result<Vec<f64>, SimError> {
        self.check_eta(eta)?;
        let mut total = vec![0.0; self.dim];
        for g in groups {
            axpy(1.0, &self.group_gradient(g, theta), &mut total);
        }
        let mut out = theta.to_vec();
        axpy(-eta, &total, &mut out);
        Ok(out)
    }

    /// Sequential group steps `x_r = x_{r−1} − η G_r(x_{r−1})` in the given
    /// order; requires `η ∈ (0, 1/L]`.
    pub fn scheduled_refresh(&self, theta: &[f64], groups: &[Vec<usize>], eta: f64) -> Result<Vec<f64>, SimError> {
        self.check_eta(eta)?;
        let mut x = theta.to_vec();
        for g in groups {
            let grad = self.group_gradient(g, &x);
            axpy(-eta, &grad, &mut x);
        }
        Ok(x)
    }

    /// Terms of the strict-improvement condition for one refresh starting
    /// at `θ`. With a constant Hessian `H`, `I_pq = ⟨H G_p⁰, G_q⁰⟩` exactly.
    pub fn improvement_terms(&self, theta: &[f64], groups: &[Vec<usize>], eta: f64) -> ImprovementTerms {
        let l = self.lipschitz;
        let h = self.group_hessian(&(0..self.num_tasks()).collect::<Vec<_>>());
        let g0: Vec<Vec<f64>> = groups.iter().map(|g| self.group_gradient(g, theta)).collect();
        let norms: Vec<f64> = g0.iter().map(|g| norm(g)).collect();
        let lr: Vec<f64> = groups.iter().map(|g| self.group_lipschitz(g)).collect();
        let m = groups.len();

        let mut cross = Vec::new();
        let mut lhs = 0.0;
        let mut negative = true;
        for p in 0..m {
            let hg = mat_vec(&h, &g0[p]);
            for q in (p + 1)..m {
                let i_pq = dot(&hg, &g0[q]);
                let denom = norms[p] * norms[q];
                let gamma = if denom > 0.0 { (-i_pq / denom).max(0.0) } else { 0.0 };
                negative &= i_pq <= 0.0;
                lhs += gamma * denom + l * dot(&g0[p], &g0[q]);
                cross.push(CrossTerm { p, q, i_pq, gamma });
            }
        }

        // Drift penalty bound R_m.
        let total_norm: f64 = norms.iter().sum();
        let mut s_prev = 0.0;
        let mut first = 0.0;
        let mut second = 0.0;
        for r in 0..m {
            if r > 0 {
                first += lr[r] * s_prev;
                let drift = lr[r] * eta * s_prev;
                second += 2.0 * norms[r] * drift + drift * drift;
            }
            s_prev += norms[r];
        }
        let rm_bound = eta * eta * total_norm * first + l * eta * eta / 2.0 * second;
        let rhs = rm_bound / (eta * eta);
        ImprovementTerms {
            cross,
            lhs,
            rm_bound,
            rhs,
            negative_cross_terms: negative,
            holds: negative && lhs > rhs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossTerm {
    pub p: usize,
    pub q: usize,
    /// Hessian-weighted cross term `⟨H G_p⁰, G_q⁰⟩`.
    pub i_pq: f64,
    /// Margin `Γ_pq = max(0, −I_pq / (‖G_p⁰‖ ‖G_q⁰‖))`.
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementTerms {
    pub cross: Vec<CrossTerm>,
    /// `Σ_{p<q} (Γ_pq ‖G_p⁰‖ ‖G_q⁰‖ + L ⟨G_p⁰, G_q⁰⟩)`
    pub lhs: f64,
    /// Bound on the drift penalty `R_m`.
    pub rm_bound: f64,
    /// `R_m / η²`
    pub rhs: f64,
    /// Every `I_pq ≤ 0`.
    pub negative_cross_terms: bool,
    /// Negative cross terms and `lhs > rhs`.
    pub holds: bool,
}

/// Two-task, two-dimensional instance on which the strict-improvement
/// condition holds at `θ = (−5, 5)` with `η = 1/L`.
pub fn reference_instance() -> (QuadraticMTL, Vec<f64>, Vec<Vec<usize>>) {
    let h1 = Matrix::from_rows(&[vec![4.0, 3.0], vec![3.0, 4.0]]).expect("square");
    let h2 = Matrix::from_rows(&[vec![0.05, 0.0], vec![0.0, 0.5]]).expect("square");
    let quad = QuadraticMTL::new(vec![
        QuadraticTask {
            hessian: h1,
            optimum: vec![0.0, 2.0],
        },
        QuadraticTask {
            hessian: h2,
            optimum: vec![5.0, -5.0],
        },
    ])
    .expect("valid instance");
    (quad, vec![-5.0, 5.0], vec![vec![0], vec![1]])
}

/// Random PSD Hessian `A Aᵀ / d + λ I` with eigenvalues bounded below by `λ`.
pub fn random_psd<R: Rng>(d: usize, ridge: f64, rng: &mut R) -> Matrix {
    let a: Vec<f64> = (0..d * d).map(|_| rng.sample(StandardNormal)).collect();
    let a = Matrix::from_vec(d, d, a).expect("square");
    let mut h = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let v = dot(a.row(i), a.row(j)) / d as f64 + if i == j { ridge } else { 0.0 };
            h.set(i, j, v);
        }
    }
    h
}

/// `groups` groups of tasks, each group confined to its own coordinate
/// block, so no group's step changes another group's gradient.
pub fn block_diagonal_instance(groups: usize, tasks_per_group: usize, block: usize, seed: u64) -> (QuadraticMTL, Vec<Vec<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = groups * block;
    let mut tasks = Vec::new();
    let mut members = Vec::new();
    for g in 0..groups {
        let mut ids = Vec::new();
        for _ in 0..tasks_per_group {
            let local = random_psd(block, 0.1, &mut rng);
            let mut h = Matrix::zeros(d, d);
            for i in 0..block {
                for j in 0..block {
                    h.set(g * block + i, g * block + j, local.get(i, j));
                }
            }
            let optimum = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            ids.push(tasks.len());
            tasks.push(QuadraticTask { hessian: h, optimum });
        }
        members.push(ids);
    }
    (QuadraticMTL::new(tasks).expect("valid instance"), members)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_group_matches_gradient_step() {
        let (q, theta, _) = reference_instance();
        let eta = 1.0 / q.lipschitz();
        let all = vec![vec![0, 1]];
        let agg = q.aggregated_step(&theta, &all, eta).unwrap();
        let sch = q.scheduled_refresh(&theta, &all, eta).unwrap();
        let mut plain = theta.clone();
        axpy(-eta, &q.gradient(&theta), &mut plain);
        assert_eq!(agg, plain);
        assert_eq!(sch, plain);
    }

    #[test]
    fn cancelling_groups_leave_theta() {
        let h = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let q = QuadraticMTL::new(vec![
            QuadraticTask {
                hessian: h.clone(),
                optimum: vec![1.0, 0.0],
            },
            QuadraticTask {
                hessian: h,
                optimum: vec![-1.0, 0.0],
            },
        ])
        .unwrap();
        let out = q.aggregated_step(&[0.0, 0.0], &[vec![0], vec![1]], 0.5).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn hand_computed_affine_update() {
        // H = diag(2, 4), θ* = (1, 1), θ = (0, 0): ∇ = (−2, −4); η = 0.25.
        let h = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let q = QuadraticMTL::new(vec![QuadraticTask {
            hessian: h,
            optimum: vec![1.0, 1.0],
        }])
        .unwrap();
        assert_eq!(q.lipschitz(), 4.0);
        assert_eq!(q.aggregated_step(&[0.0, 0.0], &[vec![0]], 0.25).unwrap(), vec![0.5, 1.0]);
    }

    #[test]
    fn step_above_inverse_lipschitz_rejected() {
        let (q, theta, groups) = reference_instance();
        let eta = 1.01 / q.lipschitz();
        assert!(matches!(q.aggregated_step(&theta, &groups, eta), Err(SimError::StepOutOfRange { .. })));
        assert!(matches!(q.scheduled_refresh(&theta, &groups, eta), Err(SimError::StepOutOfRange { .. })));
    }

    #[test]
    fn reference_instance_terms() {
        let (q, theta, groups) = reference_instance();
        assert_eq!(q.lipschitz(), 7.5);
        let t = q.improvement_terms(&theta, &groups, 1.0 / 7.5);
        assert!(t.negative_cross_terms);
        assert!((t.cross[0].i_pq + 205.725).abs() < 1e-9);
        assert!(t.holds, "{t:?}");
    }

    #[test]
    fn non_psd_rejected() {
        let h = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(QuadraticMTL::new(vec![QuadraticTask {
            hessian: h,
            optimum: vec![0.0, 0.0]
        }])
        .is_err());
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::conflict_graph::{build_graph, ConflictGraph};
use crate::grad_stats::GradStats;
use crate::linalg::{axpy, cosine, dot, norm, Matrix};

/// Build parameters for a planted-partition suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub num_tasks: usize,
    pub dim: usize,
    pub groups: usize,
    pub tau: f64,
    pub gamma: f64,
    pub sigma: f64,
    /// Norm of every mean gradient.
    pub m0: f64,
    /// Largest angle (degrees) between a task mean and its group center.
    pub jitter_deg: f64,
    pub seed: u64,
}

impl PlantedSpec {
    pub fn two_groups(num_tasks: usize, dim: usize, tau: f64, gamma: f64, sigma: f64, seed: u64) -> Self {
        Self {
            num_tasks,
            dim,
            groups: 2,
            tau,
            gamma,
            sigma,
            m0: 1.0,
            jitter_deg: 0.0,
            seed,
        }
    }
}

/// Tasks with known mean gradients whose pairwise cosines clear the
/// threshold `τ` by at least `γ` on the correct side: within a group
/// `cos ≥ −(τ − γ)`, across groups `cos ≤ −(τ + γ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedTaskSuite {
    pub spec: PlantedSpec,
    pub group_of: Vec<usize>,
    pub mu: Matrix,
}

/// One violated margin inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginViolation {
    pub i: usize,
    pub j: usize,
    pub cosine: f64,
    pub bound: f64,
    pub same_group: bool,
}

impl std::fmt::Display for MarginViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.same_group {
            write!(f, "within-group cos(μ_{}, μ_{}) = {:.6} < {:.6}", self.i, self.j, self.cosine, self.bound)
        } else {
            write!(f, "cross-group cos(μ_{}, μ_{}) = {:.6} > {:.6}", self.i, self.j, self.cosine, self.bound)
        }
    }
}

fn unit(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Centers of `g` groups: `±e₁` for two groups, otherwise the vertices of a
/// regular simplex (pairwise cosine `−1/(g−1)`) in the first `g`
/// coordinates.
fn group_centers(g: usize, d: usize) -> Vec<Vec<f64>> {
    if g == 2 {
        let mut a = vec![0.0; d];
        a[0] = 1.0;
        let b = a.iter().map(|x| -x).collect();
        return vec![a, b];
    }
    (0..g)
        .map(|i| {
            let mut c = vec![-1.0 / g as f64; d];
            c[g..].iter_mut().for_each(|x| *x = 0.0);
            c[i] += 1.0;
            unit(&mut c);
            c
        })
        .collect()
}

/// Builds the suite and audits every pairwise cosine against the margin.
pub fn make_planted_suite(spec: &PlantedSpec) -> Result<PlantedTaskSuite, SimError> {
    let PlantedSpec {
        num_tasks: k,
        dim: d,
        groups: g,
        tau,
        gamma,
        sigma,
        m0,
        jitter_deg,
        seed,
    } = *spec;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(SimError::invalid("tau", format!("must lie in (0, 1), got {tau}")));
    }
    if !(gamma > 0.0 && gamma < 1.0 - tau) {
        return Err(SimError::invalid("gamma", format!("must lie in (0, 1 − τ) = (0, {}), got {gamma}", 1.0 - tau)));
    }
    if g < 2 || g > k {
        return Err(SimError::invalid("groups", format!("need 2 ≤ groups ≤ K = {k}, got {g}")));
    }
    let need_dim = if g == 2 { 1 } else { g } + usize::from(jitter_deg > 0.0);
    if d < need_dim {
        return Err(SimError::invalid("dim", format!("{g} groups with jitter need d ≥ {need_dim}, got {d}")));
    }
    if !(sigma >= 0.0) || !(m0 > 0.0) {
        return Err(SimError::invalid("sigma/m0", "sigma must be ≥ 0 and m0 > 0"));
    }
    if !(0.0..90.0).contains(&jitter_deg) {
        return Err(SimError::invalid("jitter_deg", format!("must lie in [0, 90), got {jitter_deg}")));
    }

    let centers = group_centers(g, d);
    let group_of: Vec<usize> = (0..k).map(|i| i * g / k).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_angle = jitter_deg.to_radians();
    let mut mu = Matrix::zeros(k, d);
    for i in 0..k {
        let c = &centers[group_of[i]];
        let mut dir = c.clone();
        if max_angle > 0.0 {
            let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let along = dot(&u, c);
            axpy(-along, c, &mut u);
            unit(&mut u);
            let angle = rng.random::<f64>() * max_angle;
            dir = c.iter().zip(&u).map(|(a, b)| angle.cos() * a + angle.sin() * b).collect();
        }
        for (dst, x) in mu.row_mut(i).iter_mut().zip(&dir) {
            *dst = m0 * x;
        }
    }
    let suite = PlantedTaskSuite {
        spec: spec.clone(),
        group_of,
        mu,
    };
    if let Some(v) = suite.margin_violations().into_iter().next() {
        return Err(SimError::InfeasibleMargin(v.to_string()));
    }
    Ok(suite)
}

impl PlantedTaskSuite {
    pub fn num_tasks(&self) -> usize {
        self.mu.rows()
    }

    pub fn dim(&self) -> usize {
        self.mu.cols()
    }

    pub fn tau(&self) -> f64 {
        self.spec.tau
    }

    pub fn sigma(&self) -> f64 {
        self.spec.sigma
    }

    /// Every pair that breaks the margin, by exhaustive enumeration.
    pub fn margin_violations(&self) -> Vec<MarginViolation> {
        let (tau, gamma) = (self.spec.tau, self.spec.gamma);
        let k = self.num_tasks();
        let mut out = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                let c = cosine(self.mu.row(i), self.mu.row(j)).unwrap_or(0.0);
                let same = self.group_of[i] == self.group_of[j];
                let (ok, bound) = if same {
                    (c >= -(tau - gamma), -(tau - gamma))
                } else {
                    (c <= -(tau + gamma), -(tau + gamma))
                };
                if !ok {
                    out.push(MarginViolation {
                        i,
                        j,
                        cosine: c,
                        bound,
                        same_group: same,
                    });
                }
            }
        }
        out
    }

    pub fn min_mean_norm(&self) -> f64 {
        self.mu.iter_rows().map(norm).fold(f64::INFINITY, f64::min)
    }

    /// Conflict graph of the true means at the suite's threshold.
    pub fn population_graph(&self) -> ConflictGraph {
        let stats = GradStats::from_rows(&self.mu.iter_rows().collect::<Vec<_>>(), 0.0).expect("valid means");
        build_graph(&stats.interference_matrix().expect("at least two tasks"), self.spec.tau).expect("tau in range")
    }

    /// `μ_i + σ ξ` with `ξ ~ N(0, I)`.
    pub fn sample_gradient<R: Rng>(&self, task: usize, rng: &mut R) -> Vec<f64> {
        let sigma = self.spec.sigma;
        self.mu
            .row(task)
            .iter()
            .map(|&m| if sigma == 0.0 { m } else { m + sigma * rng.sample::<f64, _>(StandardNormal) })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn antipodal_pair() {
        let s = make_planted_suite(&PlantedSpec::two_groups(2, 3, 0.5, 0.4, 0.0, 0)).unwrap();
        assert_eq!(s.mu.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(s.mu.row(1), &[-1.0, 0.0, 0.0]);
        assert!(s.margin_violations().is_empty());
    }

    #[test]
    fn jittered_eight_tasks_pass_audit() {
        let mut spec = PlantedSpec::two_groups(8, 16, 0.3, 0.2, 1.0, 11);
        spec.jitter_deg = 25.0;
        let s = make_planted_suite(&spec).unwrap();
        assert_eq!(s.group_of, vec![0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(s.population_graph().num_edges(), 16);
        for i in 0..8 {
            assert!((norm(s.mu.row(i)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn margin_too_wide_rejected() {
        let err = make_planted_suite(&PlantedSpec::two_groups(4, 4, 0.5, 0.5, 1.0, 0)).unwrap_err();
        assert!(matches!(err, SimError::InvalidParam { name: "gamma", .. }));
    }

    #[test]
    fn infeasible_jitter_reports_pair() {
        let mut spec = PlantedSpec::two_groups(8, 16, 0.5, 0.4, 1.0, 3);
        spec.jitter_deg = 40.0;
        let err = make_planted_suite(&spec).unwrap_err();
        assert!(matches!(err, SimError::InfeasibleMargin(ref m) if m.contains("cross-group")), "{err}");
    }

    #[test]
    fn three_group_simplex() {
        let spec = PlantedSpec {
            groups: 3,
            ..PlantedSpec::two_groups(6, 4, 0.3, 0.15, 0.0, 0)
        };
        let s = make_planted_suite(&spec).unwrap();
        let c = cosine(s.mu.row(0), s.mu.row(2)).unwrap();
        assert!((c + 0.5).abs() < 1e-12);
        assert_eq!(s.population_graph().num_edges(), 12);
    }

    #[test]
    fn noiseless_sample_is_mean() {
        let s = make_planted_suite(&PlantedSpec::two_groups(4, 5, 0.5, 0.3, 0.0, 0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(s.sample_gradient(2, &mut rng), s.mu.row(2));
    }
}

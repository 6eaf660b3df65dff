//! Optimizer layers applied to the active group's gradients before the
//! parameter update: pairwise conflict projection and per-task norm scaling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{axpy, dot, norm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinatorMode {
    None,
    Project,
    AdaptiveScale,
    ProjectAndScale,
}

impl CombinatorMode {
    pub fn name(self) -> &'static str {
        match self {
            CombinatorMode::None => "none",
            CombinatorMode::Project => "project",
            CombinatorMode::AdaptiveScale => "adaptive_scale",
            CombinatorMode::ProjectAndScale => "project_and_scale",
        }
    }

    fn projects(self) -> bool {
        matches!(self, CombinatorMode::Project | CombinatorMode::ProjectAndScale)
    }

    fn scales(self) -> bool {
        matches!(self, CombinatorMode::AdaptiveScale | CombinatorMode::ProjectAndScale)
    }
}

impl std::str::FromStr for CombinatorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            CombinatorMode::None,
            CombinatorMode::Project,
            CombinatorMode::AdaptiveScale,
            CombinatorMode::ProjectAndScale,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| format!("unknown combinator {s:?} (expected none, project, adaptive_scale, project_and_scale)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinatorConfig {
    pub mode: CombinatorMode,
    pub scale_ema_beta: f64,
    pub scale_floor: f64,
    /// Apply scaling before projection instead of after.
    pub scale_first: bool,
}

impl Default for CombinatorConfig {
    fn default() -> Self {
        Self {
            mode: CombinatorMode::None,
            scale_ema_beta: 0.9,
            scale_floor: 1e-6,
            scale_first: false,
        }
    }
}

impl CombinatorConfig {
    pub fn with_mode(mode: CombinatorMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.scale_ema_beta) {
            return Err(format!("scale_ema_beta must lie in [0, 1), got {}", self.scale_ema_beta));
        }
        if !(self.scale_floor > 0.0) {
            return Err(format!("scale_floor must be positive, got {}", self.scale_floor));
        }
        Ok(())
    }
}

/// Pairwise conflict projection: for each `g_i` and each other `g_j` in a
/// shuffled order, if `⟨g_i', g_j⟩ < 0` the component of `g_i'` along `g_j`
/// is removed. Projections are always against the original `g_j`.
pub fn project_within_group<R: rand::Rng>(grads: &[Vec<f64>], rng: &mut R) -> Vec<Vec<f64>> {
    let n = grads.len();
    let sq: Vec<f64> = grads.iter().map(|g| dot(g, g)).collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut gi = grads[i].clone();
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.shuffle(rng);
        for j in others {
            if sq[j] == 0.0 {
                continue;
            }
            let c = dot(&gi, &grads[j]);
            if c < 0.0 {
                axpy(-c / sq[j], &grads[j], &mut gi);
            }
        }
        out.push(gi);
    }
    out
}

/// Per-task running gradient norm. Each gradient is divided by
/// `max(floor, ema)` and the EMA is updated afterwards; the EMA starts at the
/// first observed norm.
#[derive(Clone, Debug)]
pub struct AdaptiveScaler {
    beta: f64,
    floor: f64,
    ema: Vec<Option<f64>>,
}

impl AdaptiveScaler {
    pub fn new(num_tasks: usize, beta: f64, floor: f64) -> Self {
        Self {
            beta,
            floor,
            ema: vec![None; num_tasks],
        }
    }

    pub fn norm_ema(&self, task: usize) -> Option<f64> {
        self.ema[task]
    }

    pub fn scale(&mut self, task: usize, grad: &[f64]) -> Vec<f64> {
        let n = norm(grad);
        let ema = *self.ema[task].get_or_insert(n);
        let s = ema.max(self.floor);
        self.ema[task] = Some(self.beta * ema + (1.0 - self.beta) * n);
        grad.iter().map(|x| x / s).collect()
    }
}

/// Stateful combinator applied to each step's active gradients.
#[derive(Clone, Debug)]
pub struct Combinator {
    cfg: CombinatorConfig,
    scaler: AdaptiveScaler,
    rng: ChaCha8Rng,
}

impl Combinator {
    pub fn new(cfg: CombinatorConfig, num_tasks: usize, seed: u64) -> Self {
        let scaler = AdaptiveScaler::new(num_tasks, cfg.scale_ema_beta, cfg.scale_floor);
        Self {
            cfg,
            scaler,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn mode(&self) -> CombinatorMode {
        self.cfg.mode
    }

    /// Transforms the gradients of `tasks` (same order).
    pub fn apply(&mut self, tasks: &[usize], grads: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let mode = self.cfg.mode;
        let mut grads = grads;
        if self.cfg.scale_first && mode.scales() {
            grads = self.scale_all(tasks, grads);
        }
        if mode.projects() && grads.len() > 1 {
            grads = project_within_group(&grads, &mut self.rng);
        }
        if !self.cfg.scale_first && mode.scales() {
            grads = self.scale_all(tasks, grads);
        }
        grads
    }

    fn scale_all(&mut self, tasks: &[usize], grads: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        tasks.iter().zip(grads).map(|(&k, g)| self.scaler.scale(k, &g)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn orthogonal_unchanged() {
        let g = vec![vec![1.0, 0.0], vec![0.0, 2.0]];
        assert_eq!(project_within_group(&g, &mut rng()), g);
    }

    #[test]
    fn conflicting_pair_projected() {
        let g = vec![vec![1.0, 0.0], vec![-1.0, 1.0]];
        let out = project_within_group(&g, &mut rng());
        assert_eq!(out[0], vec![0.5, 0.5]);
        assert_eq!(out[1], vec![0.0, 1.0]);
    }

    #[test]
    fn single_and_empty_unchanged() {
        assert!(project_within_group(&[], &mut rng()).is_empty());
        let g = vec![vec![3.0, -1.0]];
        assert_eq!(project_within_group(&g, &mut rng()), g);
    }

    #[test]
    fn unit_stream_is_fixed_point() {
        let mut s = AdaptiveScaler::new(1, 0.9, 1e-6);
        for _ in 0..50 {
            let out = s.scale(0, &[0.6, 0.8]);
            assert!((norm(&out) - 1.0).abs() < 1e-12);
        }
        assert!((s.norm_ema(0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alternating_norms_unrolled() {
        // ema: 1 -> 1 -> 2 -> 1.5 -> 2.25; outputs 1/1, 3/1, 1/2, 3/1.5.
        let mut s = AdaptiveScaler::new(1, 0.5, 1e-6);
        let got: Vec<f64> = [1.0, 3.0, 1.0, 3.0].iter().map(|&n| norm(&s.scale(0, &[n]))).collect();
        let want = [1.0, 3.0, 0.5, 2.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{got:?}");
        }
        assert_eq!(s.norm_ema(0), Some(2.25));
    }

    #[test]
    fn zero_gradient_stays_zero() {
        let mut s = AdaptiveScaler::new(1, 0.5, 1e-6);
        assert_eq!(s.scale(0, &[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn order_matters_when_both_enabled() {
        let tasks = [0, 1];
        let g = vec![vec![2.0, 0.0], vec![-1.0, 3.0]];
        let mut a = Combinator::new(CombinatorConfig::with_mode(CombinatorMode::ProjectAndScale), 2, 1);
        let mut cfg = CombinatorConfig::with_mode(CombinatorMode::ProjectAndScale);
        cfg.scale_first = true;
        let mut b = Combinator::new(cfg, 2, 1);
        assert_ne!(a.apply(&tasks, g.clone()), b.apply(&tasks, g));
    }
}

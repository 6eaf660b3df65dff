use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{PlantedTaskSuite, QuadraticMTL};
use crate::linalg::{dot, Matrix};
use crate::scheduler::{GradientOracle, TaskGradient};

/// Membership change applied at a fixed step: every listed task takes the
/// mean of `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSwap {
    pub at: usize,
    pub tasks: Vec<usize>,
    pub target: usize,
}

/// Planted suite as a gradient source. Each task's loss is linear,
/// `⟨μ_i, θ⟩`, so the sampled gradient does not depend on `θ`.
#[derive(Clone, Debug)]
pub struct PlantedOracle {
    suite: PlantedTaskSuite,
    swaps: Vec<GroupSwap>,
    mu: Matrix,
}

impl PlantedOracle {
    pub fn new(suite: PlantedTaskSuite) -> Self {
        let mu = suite.mu.clone();
        Self {
            suite,
            swaps: Vec::new(),
            mu,
        }
    }

    /// Adds a drift event; swaps apply in the order given.
    pub fn with_swap(mut self, swap: GroupSwap) -> Self {
        self.swaps.push(swap);
        self
    }

    pub fn suite(&self) -> &PlantedTaskSuite {
        &self.suite
    }

    /// Means in force at the current step.
    pub fn current_means(&self) -> &Matrix {
        &self.mu
    }
}

impl GradientOracle for PlantedOracle {
    fn num_tasks(&self) -> usize {
        self.suite.num_tasks()
    }

    fn shared_dim(&self) -> usize {
        self.suite.dim()
    }

    fn begin_step(&mut self, t: usize) {
        for s in &self.swaps {
            if s.at == t {
                let target = self.mu.row(s.target).to_vec();
                for &k in &s.tasks {
                    self.mu.row_mut(k).copy_from_slice(&target);
                }
            }
        }
    }

    fn gradient(&mut self, task: usize, shared: &[f64], _head: &[f64], rng: &mut ChaCha8Rng) -> TaskGradient {
        let sigma = self.suite.sigma();
        let g: Vec<f64> = self
            .mu
            .row(task)
            .iter()
            .map(|&m| if sigma == 0.0 { m } else { m + sigma * rng.sample::<f64, _>(StandardNormal) })
            .collect();
        TaskGradient {
            loss: dot(self.mu.row(task), shared),
            shared: g,
            head: Vec::new(),
        }
    }
}

/// Quadratic tasks with optional additive Gaussian gradient noise.
#[derive(Clone, Debug)]
pub struct QuadraticOracle {
    pub quad: QuadraticMTL,
    pub sigma: f64,
    pub theta0: Vec<f64>,
}

impl GradientOracle for QuadraticOracle {
    fn num_tasks(&self) -> usize {
        self.quad.num_tasks()
    }

    fn shared_dim(&self) -> usize {
        self.quad.dim()
    }

    fn initial_shared(&self) -> Vec<f64> {
        self.theta0.clone()
    }

    fn gradient(&mut self, task: usize, shared: &[f64], _head: &[f64], rng: &mut ChaCha8Rng) -> TaskGradient {
        let t = self.quad.task(task);
        let mut g = t.gradient(shared);
        if self.sigma > 0.0 {
            g.iter_mut().for_each(|x| *x += self.sigma * rng.sample::<f64, _>(StandardNormal));
        }
        TaskGradient {
            loss: t.loss(shared),
            shared: g,
            head: Vec::new(),
        }
    }
}

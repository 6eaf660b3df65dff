use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{trial_seed, QuadraticMTL, QuadraticTask, SimError};
use crate::linalg::{axpy, dot};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSampling {
    /// Class drawn uniformly each step, update scaled by `m` (unbiased for
    /// the full gradient).
    Randomized,
    /// Classes in fixed cyclic order, unscaled.
    Cyclic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSpec {
    pub horizons: Vec<usize>,
    pub seeds: usize,
    /// Step size is `c / √T`.
    pub c: f64,
    /// Per-task additive gradient noise.
    pub sigma: f64,
    pub sampling: ClassSampling,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub horizon: usize,
    /// `min_t` of the seed-averaged `‖∇F(θ_t)‖²`, `t = 0..=T`.
    pub min_mean_sq_grad: f64,
    /// Seed-averaged `‖∇F(θ_T)‖²`.
    pub final_mean_sq_grad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceResult {
    pub points: Vec<ConvergencePoint>,
    /// Least-squares slope of `ln min E‖∇F‖²` against `ln T`.
    pub slope: f64,
    pub intercept: f64,
}

/// Seed-averaged squared full-gradient norm along one horizon, `t = 0..=T`.
pub fn mean_sq_grad_trace(
    quad: &QuadraticMTL,
    classes: &[Vec<usize>],
    theta0: &[f64],
    horizon: usize,
    spec: &ConvergenceSpec,
) -> Vec<f64> {
    let m = classes.len();
    let eta = spec.c / (horizon.max(1) as f64).sqrt();
    let mut acc = vec![0.0; horizon + 1];
    for s in 0..spec.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(spec.seed ^ horizon as u64, s));
        let mut theta = theta0.to_vec();
        for (t, slot) in acc.iter_mut().enumerate() {
            let g = quad.gradient(&theta);
            *slot += dot(&g, &g);
            if t == horizon {
                break;
            }
            let (class, scale) = match spec.sampling {
                ClassSampling::Randomized => (rng.random_range(0..m), m as f64),
                ClassSampling::Cyclic => (t % m, 1.0),
            };
            let mut step = quad.group_gradient(&classes[class], &theta);
            if spec.sigma > 0.0 {
                for _ in &classes[class] {
                    for x in step.iter_mut() {
                        *x += spec.sigma * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            axpy(-eta * scale, &step, &mut theta);
        }
    }
    acc.iter_mut().for_each(|v| *v /= spec.seeds.max(1) as f64);
    acc
}

/// Runs every horizon and fits the log-log slope of the best
/// seed-averaged squared gradient norm.
pub fn convergence_experiment(
    quad: &QuadraticMTL,
    classes: &[Vec<usize>],
    theta0: &[f64],
    spec: &ConvergenceSpec,
) -> Result<ConvergenceResult, SimError> {
    if classes.is_empty() || classes.iter().any(Vec::is_empty) {
        return Err(SimError::invalid("classes", "need at least one nonempty class"));
    }
    if spec.horizons.len() < 2 {
        return Err(SimError::invalid("horizons", "need at least two horizons for a slope"));
    }
    let points: Vec<ConvergencePoint> = spec
        .horizons
        .iter()
        .map(|&h| {
            let trace = mean_sq_grad_trace(quad, classes, theta0, h, spec);
            ConvergencePoint {
                horizon: h,
                min_mean_sq_grad: trace.iter().copied().fold(f64::INFINITY, f64::min),
                final_mean_sq_grad: *trace.last().expect("nonempty"),
            }
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| (p.horizon as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.min_mean_sq_grad.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    Ok(ConvergenceResult {
        points,
        slope,
        intercept,
    })
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Smooth testbed for the rate check: four quadratic tasks in `d = 8` with
/// random Hessians and distinct optima, split into two classes.
pub fn convergence_testbed(seed: u64) -> (QuadraticMTL, Vec<Vec<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 8;
    let tasks = (0..4)
        .map(|_| QuadraticTask {
            hessian: super::random_psd(d, 0.1, &mut rng),
            optimum: (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        })
        .collect();
    (QuadraticMTL::new(tasks).expect("valid testbed"), vec![vec![0, 1], vec![2, 3]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_descent_is_monotone() {
        let (q, _) = convergence_testbed(1);
        let classes = vec![vec![0, 1, 2, 3]];
        let spec = ConvergenceSpec {
            horizons: vec![400],
            seeds: 1,
            c: 20.0 / q.lipschitz(),
            sigma: 0.0,
            sampling: ClassSampling::Cyclic,
            seed: 0,
        };
        let trace = mean_sq_grad_trace(&q, &classes, &vec![0.0; 8], 400, &spec);
        // Below 1e-20 the iterates sit at the rounding floor.
        assert!(trace.windows(2).all(|w| w[1] <= w[0] || w[0] < 1e-20), "{trace:?}");
        assert!(trace[400] < 1e-6 * trace[0]);
    }

    #[test]
    fn slope_fit() {
        let (s, b) = least_squares(&[0.0, 1.0, 2.0], &[1.0, 0.0, -1.0]);
        assert!((s + 1.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
    }
}

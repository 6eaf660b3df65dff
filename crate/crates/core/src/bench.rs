//! Wall-clock harness comparing the uniform baseline with the scheduler on
//! a pre-generated gradient tape.
//!
//! For each task count a tape of per-step, per-task gradients and losses is
//! drawn once per method from the same seed, hashed, and then replayed.
//! Only the replay is timed. Every step folds the norm of the combined
//! gradient into a scalar sink so no work can be skipped.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::Config;
use crate::linalg::{axpy, dot, norm};
use crate::optim::{Combinator, CombinatorConfig, CombinatorMode};
use crate::record::hex;
use crate::scheduler::{AnnealCurve, SchedulerConfig, SchedulerError, SchedulerState, StepSize};
use crate::sim::{make_planted_suite, PlantedSpec, SimError};

pub const BENCH_CSV_VERSION: u32 = 1;

/// Step size used during replay; small enough that θ stays bounded.
const BENCH_ETA: f64 = 1e-3;
/// Anneal horizon shared by every refresh period, so that `R` is the only
/// setting that changes between scheduler runs.
const BENCH_ANNEAL_HORIZON: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchMethod {
    Uniform,
    SonGoku,
    SonGokuProject,
    SonGokuScale,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 4] = [
        BenchMethod::Uniform,
        BenchMethod::SonGoku,
        BenchMethod::SonGokuProject,
        BenchMethod::SonGokuScale,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Uniform => "uniform",
            BenchMethod::SonGoku => "songoku",
            BenchMethod::SonGokuProject => "songoku+project",
            BenchMethod::SonGokuScale => "songoku+scale",
        }
    }

    fn combinator(self) -> Option<CombinatorMode> {
        match self {
            BenchMethod::Uniform => None,
            BenchMethod::SonGoku => Some(CombinatorMode::None),
            BenchMethod::SonGokuProject => Some(CombinatorMode::Project),
            BenchMethod::SonGokuScale => Some(CombinatorMode::AdaptiveScale),
        }
    }
}

impl std::str::FromStr for BenchMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown bench method {s:?} (expected uniform, songoku, songoku+project, songoku+scale)"))
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid bench config `{field}`: {msg}")]
    InvalidConfig { field: &'static str, msg: String },
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub task_counts: Vec<usize>,
    pub refresh_periods: Vec<usize>,
    pub dim: usize,
    pub steps: usize,
    pub repeats: usize,
    pub seed: u64,
    pub tau_star: f64,
    pub beta: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            task_counts: vec![3, 6, 16, 40],
            refresh_periods: vec![4, 32, 256],
            dim: 1024,
            steps: 900,
            repeats: 10,
            seed: 0,
            tau_star: 0.5,
            beta: 0.9,
        }
    }
}

impl BenchConfig {
    pub fn from_config(c: &Config) -> Self {
        Self {
            task_counts: c.bench_k.clone(),
            refresh_periods: c.bench_r.clone(),
            dim: c.bench_d,
            steps: c.steps,
            repeats: c.repeats,
            seed: c.seed,
            tau_star: c.tau_star,
            beta: c.beta,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |field, msg: String| Err(BenchError::InvalidConfig { field, msg });
        if self.repeats < 1 {
            return bad("repeats", "must be at least 1".into());
        }
        if self.steps < 1 {
            return bad("steps", "must be at least 1".into());
        }
        if self.dim < 1 {
            return bad("dim", "must be at least 1".into());
        }
        if self.task_counts.is_empty() || self.task_counts.iter().any(|&k| k < 2) {
            return bad("task_counts", format!("need a nonempty list of values ≥ 2, got {:?}", self.task_counts));
        }
        if self.refresh_periods.is_empty() || self.refresh_periods.contains(&0) {
            return bad("refresh_periods", format!("need a nonempty list of values ≥ 1, got {:?}", self.refresh_periods));
        }
        Ok(())
    }

    fn scheduler_config(&self, refresh_period: usize, mode: CombinatorMode) -> SchedulerConfig {
        SchedulerConfig {
            tau_star: self.tau_star,
            anneal: AnnealCurve {
                horizon: Some(BENCH_ANNEAL_HORIZON),
                ..AnnealCurve::default()
            },
            refresh_period,
            beta: self.beta,
            step_size: StepSize::Constant(BENCH_ETA),
            total_steps: self.steps,
            seed: self.seed,
            combinator: CombinatorConfig::with_mode(mode),
            ..SchedulerConfig::default()
        }
    }
}

/// Pre-generated gradients and losses, `steps × K × d`, row-major.
#[derive(Clone, Debug)]
pub struct GradientTape {
    num_tasks: usize,
    dim: usize,
    steps: usize,
    grads: Vec<f64>,
    losses: Vec<f64>,
}

impl GradientTape {
    /// Samples a two-group planted suite with noise of the same overall
    /// size as the means.
    pub fn generate(num_tasks: usize, dim: usize, steps: usize, seed: u64) -> Result<Self, BenchError> {
        let spec = PlantedSpec {
            m0: 1.0,
            ..PlantedSpec::two_groups(num_tasks, dim, 0.5, 0.3, 1.0 / (dim as f64).sqrt(), seed)
        };
        let suite = make_planted_suite(&spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grads = Vec::with_capacity(steps * num_tasks * dim);
        let mut losses = Vec::with_capacity(steps * num_tasks);
        for _ in 0..steps {
            for k in 0..num_tasks {
                let g = suite.sample_gradient(k, &mut rng);
                losses.push(dot(&g, suite.mu.row(k)));
                grads.extend_from_slice(&g);
            }
        }
        Ok(Self {
            num_tasks,
            dim,
            steps,
            grads,
            losses,
        })
    }

    pub fn grad(&self, t: usize, task: usize) -> &[f64] {
        let off = (t * self.num_tasks + task) * self.dim;
        &self.grads[off..off + self.dim]
    }

    pub fn loss(&self, t: usize, task: usize) -> f64 {
        self.losses[t * self.num_tasks + task]
    }

    /// SHA-256 over the little-endian bytes of gradients then losses.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for x in self.grads.iter().chain(&self.losses) {
            h.update(x.to_le_bytes());
        }
        hex(&h.finalize())
    }
}

/// Timings of one method on one `(K, R)` configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: BenchMethod,
    pub num_tasks: usize,
    /// `None` for the uniform baseline, which never refreshes.
    pub refresh_period: Option<usize>,
    pub dim: usize,
    pub steps: usize,
    pub samples: Vec<f64>,
    pub mean_s: f64,
    pub std_s: f64,
    /// Multiply-adds per repeat.
    pub flops: u64,
    pub sink: f64,
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
    /// Every method saw a tape with the same checksum for each `K`.
    pub checksums_agree: bool,
}

impl BenchResult {
    pub fn row(&self, method: BenchMethod, num_tasks: usize, refresh_period: Option<usize>) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.num_tasks == num_tasks && r.refresh_period == refresh_period)
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            format!("# gradsched bench v{BENCH_CSV_VERSION}\nmethod,K,R,d,steps,repeats,mean_s,std_s,flops,sink,checksum\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.method.name(),
                r.num_tasks,
                r.refresh_period.map_or_else(|| "-".to_string(), |p| p.to_string()),
                r.dim,
                r.steps,
                r.samples.len(),
                r.mean_s,
                r.std_s,
                r.flops,
                r.sink,
                r.checksum
            ));
        }
        out
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct Replay {
    seconds: f64,
    flops: u64,
    sink: f64,
}

fn replay_uniform(tape: &GradientTape) -> Replay {
    let (k, d) = (tape.num_tasks, tape.dim);
    let start = Instant::now();
    let mut theta = vec![0.0; d];
    let mut combined = vec![0.0; d];
    let mut sink = 0.0;
    for t in 0..tape.steps {
        combined.iter_mut().for_each(|x| *x = 0.0);
        let mut loss = 0.0;
        for task in 0..k {
            axpy(1.0, tape.grad(t, task), &mut combined);
            loss += tape.loss(t, task);
        }
        axpy(-BENCH_ETA, &combined, &mut theta);
        std::hint::black_box(&theta);
        sink += norm(&combined);
        std::hint::black_box(loss);
    }
    let seconds = start.elapsed().as_secs_f64();
    Replay {
        seconds,
        flops: (tape.steps * (k + 2) * d) as u64,
        sink: std::hint::black_box(sink),
    }
}

fn replay_scheduler(tape: &GradientTape, cfg: SchedulerConfig) -> Result<Replay, BenchError> {
    let (k, d) = (tape.num_tasks, tape.dim);
    let r = cfg.refresh_period;
    let eta = cfg.eta();
    let start = Instant::now();
    let mut combinator = Combinator::new(cfg.combinator.clone(), k, cfg.seed);
    let mut state = SchedulerState::new(cfg, vec![0.0; d], &vec![0; k])?;
    let mut sink = 0.0;
    let mut flops = 0u64;
    let mut combined = vec![0.0; d];
    for t in 0..tape.steps {
        let active = state.active_set(t);
        let mut grads = Vec::with_capacity(active.len());
        let mut loss = 0.0;
        for &task in &active {
            let g = tape.grad(t, task);
            state.observe(task, g)?;
            grads.push(g.to_vec());
            loss += tape.loss(t, task);
        }
        let grads = combinator.apply(&active, grads);
        combined.iter_mut().for_each(|x| *x = 0.0);
        for g in &grads {
            axpy(1.0, g, &mut combined);
        }
        state.descend(&combined, eta)?;
        sink += norm(&combined);
        std::hint::black_box(loss);
        flops += (2 * active.len() + 2) as u64 * d as u64;
        if (t + 1) % r == 0 {
            let probes: Vec<Vec<f64>> = (0..k).map(|task| tape.grad(t, task).to_vec()).collect();
            state.refresh(t + 1, &probes)?;
            flops += (k * d) as u64;
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    flops += state.sketch_engine().cost().flops;
    Ok(Replay {
        seconds,
        flops,
        sink: std::hint::black_box(sink),
    })
}

/// Times every requested method on every configuration, strictly
/// sequentially.
pub fn run_bench(cfg: &BenchConfig, methods: &[BenchMethod]) -> Result<BenchResult, BenchError> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut agree = true;
    for &k in &cfg.task_counts {
        let mut reference: Option<String> = None;
        for &method in methods {
            let tape = GradientTape::generate(k, cfg.dim, cfg.steps, cfg.seed ^ k as u64)?;
            let checksum = tape.checksum();
            match &reference {
                None => reference = Some(checksum.clone()),
                Some(c) => agree &= *c == checksum,
            }
            let periods: Vec<Option<usize>> = match method.combinator() {
                None => vec![None],
                Some(_) => cfg.refresh_periods.iter().copied().map(Some).collect(),
            };
            for period in periods {
                let mut samples = Vec::with_capacity(cfg.repeats);
                let mut last = None;
                for _ in 0..cfg.repeats {
                    let rep = match (method.combinator(), period) {
                        (Some(mode), Some(r)) => replay_scheduler(&tape, cfg.scheduler_config(r, mode))?,
                        _ => replay_uniform(&tape),
                    };
                    samples.push(rep.seconds);
                    last = Some(rep);
                }
                let last = last.expect("repeats ≥ 1");
                let (mean_s, std_s) = mean_std(&samples);
                rows.push(BenchRow {
                    method,
                    num_tasks: k,
                    refresh_period: period,
                    dim: cfg.dim,
                    steps: cfg.steps,
                    samples,
                    mean_s,
                    std_s,
                    flops: last.flops,
                    sink: last.sink,
                    checksum: checksum.clone(),
                });
            }
        }
    }
    Ok(BenchResult {
        config: cfg.clone(),
        rows,
        checksums_agree: agree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BenchConfig {
        BenchConfig {
            task_counts: vec![3],
            refresh_periods: vec![2],
            dim: 8,
            steps: 1,
            repeats: 1,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn single_sample_has_zero_std() {
        let res = run_bench(&tiny(), &BenchMethod::ALL).unwrap();
        assert_eq!(res.rows.len(), 4);
        for r in &res.rows {
            assert_eq!(r.samples.len(), 1);
            assert_eq!(r.std_s, 0.0);
            assert!(r.mean_s > 0.0);
        }
        assert!(res.checksums_agree);
    }

    #[test]
    fn tape_is_reproducible() {
        let a = GradientTape::generate(4, 16, 5, 9).unwrap();
        let b = GradientTape::generate(4, 16, 5, 9).unwrap();
        let c = GradientTape::generate(4, 16, 5, 10).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn csv_layout() {
        let res = run_bench(&tiny(), &[BenchMethod::Uniform, BenchMethod::SonGoku]).unwrap();
        let csv = res.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# gradsched bench v1");
        assert!(lines[2].starts_with("uniform,3,-,8,1,1,"));
        assert!(lines[3].starts_with("songoku,3,2,8,1,1,"));
    }

    #[test]
    fn rejects_zero_repeats() {
        let cfg = BenchConfig { repeats: 0, ..tiny() };
        assert!(matches!(run_bench(&cfg, &BenchMethod::ALL), Err(BenchError::InvalidConfig { field: "repeats", .. })));
    }

    #[test]
    fn method_names_round_trip() {
        for m in BenchMethod::ALL {
            assert_eq!(m.name().parse::<BenchMethod>().unwrap(), m);
        }
    }
}

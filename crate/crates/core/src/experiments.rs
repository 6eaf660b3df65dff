//! Named experiment drivers. Each returns its CSV files and a JSON summary
//! carrying the effective config and content hashes; scheduler runs made
//! along the way are returned too so callers can audit them.

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bench::{run_bench, BenchConfig, BenchError, BenchMethod, BenchResult, BenchRow};
use crate::config::{Config, ConfigError};
use crate::conflict_graph::{build_graph, ConflictGraph};
use crate::grad_stats::GradStats;
use crate::record::{hex, RunRecord};
use crate::scheduler::{audit, run, AuditReport, SchedulerConfig, SchedulerError};
use crate::sim::{
    beta_for_neff, block_diagonal_instance, convergence_experiment, convergence_testbed, make_planted_suite,
    recovery_rate, reference_instance, required_neff, trial_seed, ClassSampling, ConvergenceSpec, GroupSwap,
    PlantedOracle, PlantedTaskSuite, SimError, CALIBRATED_C,
};

pub const EXPERIMENTS: [&str; 8] = [
    "run",
    "bench",
    "recovery_curve",
    "sched_vs_agg",
    "convergence",
    "ablation_static",
    "ablation_singlestep",
    "staleness_audit",
];

/// Multiples of the required effective sample size swept by
/// `recovery_curve`.
pub const RECOVERY_SWEEP: [f64; 5] = [0.01, 0.1, 0.3, 1.0, 3.0];
/// Horizons of the convergence experiment.
pub const CONVERGENCE_HORIZONS: [usize; 3] = [100, 1_000, 10_000];
pub const CONVERGENCE_SEEDS: usize = 20;
/// Per-task gradient noise on the convergence testbed.
pub const CONVERGENCE_NOISE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment {name:?}; available: {}", EXPERIMENTS.join(", "))]
    Unknown { name: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub name: String,
    /// `(file name, contents)` pairs.
    pub files: Vec<(String, String)>,
    pub summary: Value,
    pub runs: Vec<RunRecord>,
}

fn sha256_hex(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
    }
    hex(&h.finalize())
}

fn finish(name: &str, cfg: &Config, files: Vec<(String, String)>, results: Value, runs: Vec<RunRecord>) -> ExperimentOutput {
    let text = cfg.emit();
    let mut parts = vec![text.as_str()];
    parts.extend(files.iter().map(|(_, c)| c.as_str()));
    let summary = json!({
        "experiment": name,
        "config": cfg.to_json(),
        "input_hash": sha256_hex(&[&text]),
        "content_hash": sha256_hex(&parts),
        "results": results,
    });
    ExperimentOutput {
        name: name.to_string(),
        files,
        summary,
        runs,
    }
}

/// Runs the named experiment on a validated copy of `cfg`.
pub fn run_experiment(name: &str, cfg: &Config) -> Result<ExperimentOutput, ExperimentError> {
    let cfg = cfg.clone().validated()?;
    match name {
        "run" => run_planted(&cfg),
        "bench" => bench(&cfg),
        "recovery_curve" => recovery_curve(&cfg),
        "sched_vs_agg" => sched_vs_agg(&cfg),
        "convergence" => convergence(&cfg),
        "ablation_static" => ablation_static(&cfg),
        "ablation_singlestep" => ablation_singlestep(&cfg),
        "staleness_audit" => staleness_audit(&cfg),
        _ => Err(ExperimentError::Unknown { name: name.to_string() }),
    }
}

fn suite(cfg: &Config) -> Result<PlantedTaskSuite, SimError> {
    make_planted_suite(&cfg.planted_spec())
}

fn run_planted(cfg: &Config) -> Result<ExperimentOutput, ExperimentError> {
    let mut oracle = PlantedOracle::new(suite(cfg)?);
    let rec = run(&cfg.scheduler_config(), &mut oracle)?;
    let results = json!({ "run": rec.summary_json(), "audit": audit(&rec) });
    Ok(finish("run", cfg, vec![("run.csv".into(), rec.to_csv())], results, vec![rec]))
}

/// Trend checks over a bench result: scheduler time increasing in `K` at
/// `R = 32`, uniform spread across `K`, and scheduler time non-increasing
/// in `R` at the largest `K`.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct BenchTrends {
    pub songoku_increasing_in_k: Option<bool>,
    pub uniform_max_over_min: Option<f64>,
    pub songoku_nonincreasing_in_r: Option<bool>,
}

pub fn bench_trends(res: &BenchResult) -> BenchTrends {
    let ks = &res.config.task_counts;
    let mean = |m, k, r| res.row(m, k, r).map(|row| row.mean_s);
    let at32: Option<Vec<f64>> = ks.iter().map(|&k| mean(BenchMethod::SonGoku, k, Some(32))).collect();
    let uni: Option<Vec<f64>> = ks.iter().map(|&k| mean(BenchMethod::Uniform, k, None)).collect();
    let kmax = ks.iter().copied().max();
    let by_r: Option<Vec<&BenchRow>> = kmax.and_then(|k| {
        let mut rs = res.config.refresh_periods.clone();
        rs.sort_unstable();
        rs.iter().map(|&r| res.row(BenchMethod::SonGoku, k, Some(r))).collect()
    });
    BenchTrends {
        songoku_increasing_in_k: at32.map(|v| v.windows(2).all(|w| w[1] > w[0])),
        uniform_max_over_min: uni.map(|v| {
            let max = v.iter().copied().fold(f64::MIN, f64::max);
            let min = v.iter().copied().fold(f64::MAX, f64::min);
            max / min
        }),
        songoku_nonincreasing_in_r: by_r.map(|v| v.windows(2).all(|w| not_slower_within_noise(w[0], w[1]))),
    }
}

fn std_err(row: &BenchRow) -> f64 {
    row.std_s / (row.samples.len().max(1) as f64).sqrt()
}

/// `next` is no slower than `prev`, or slower by less than two standard
/// errors of the difference.
pub fn not_slower_within_noise(prev: &BenchRow, next: &BenchRow) -> bool {
    next.mean_s <= prev.mean_s + 2.0 * std_err(prev).hypot(std_err(next))
}

fn bench(cfg: &Config) -> Result<ExperimentOutput, ExperimentError> {
    let res = run_bench(&BenchConfig::from_config(cfg), &BenchMethod::ALL)?;
    let results = json!({
        "checksums_agree": res.checksums_agree,
        "trends": bench_trends(&res),
        "rows": res.rows,
    });
    Ok(finish("bench", cfg, vec![("bench.csv".into(), res.to_csv())], results, Vec::new()))
}

fn recovery_curve(cfg: &Config) -> Result<ExperimentOutput, ExperimentError> {
    let suite = suite(cfg)?;
    let required = required_neff(CALIBRATED_C, cfg.sigma, suite.min_mean_norm(), cfg.gamma, cfg.num_tasks, cfg.delta);
    let base = required.max(1.0);
    let mut csv = String::from("# gradsched trials v1\nn_eff,beta,window,seed,success\n");
    let mut points = Vec::new();
    let mut rates = Vec::new();
    for factor in RECOVERY_SWEEP {
        let n = factor * base;
        let (beta, window) = beta_for_neff(n)?;
        let r = recovery_rate(&suite, n, cfg.trials, cfg.seed)?;
        for t in &r.per_trial {
            csv.push_str(&format!("{n},{beta},{window},{},{}\n", t.seed, u8::from(t.success)));
        }
        rates.push(r.rate);
        points.push(json!({
            "factor": factor, "n_eff": n, "beta": beta, "window": window,
            "rate": r.rate, "ci_low": r.ci_low, "ci_high": r.ci_high,
        }));
    }
    let results = json!({
        "calibrated_c": CALIBRATED_C,
        "required_n_eff": required,
        "points": points,
        "monotone": rates.windows(2).all(|w| w[1] >= w[0]),
    });
    Ok(finish("recovery_curve", cfg, vec![("recovery_curve.csv".into(), csv)], results, Vec::new()))
}

fn sched_vs_agg(cfg: &Config) -> Result<ExperimentOutput, ExperimentError> {
    let mut csv = String::from("# gradsched sched_vs_agg v1\ninstance,eta,f_aggregated,f_scheduled,gap,lhs,rhs,holds\n");
    let (quad, theta, groups) = reference_instance();
    let l = quad.lipschitz();
    let mut reference = Vec::new();
    for frac in [1.0, 0.5, 0.25] {
        let eta = frac / l;
        let fa = quad.loss(&quad.aggregated_step(&theta, &groups, eta)?);
        let fs = quad.loss(&quad.scheduled_refresh(&theta, &groups, eta)?);
        let terms = quad.improvement_terms(&theta, &groups, eta);
        csv.push_str(&format!("reference,{eta},{fa},{fs},{},{},{},{}\n", fa - fs, terms.lhs, terms.rhs, u8::from(terms.holds)));
        reference.push(json!({ "eta": eta, "f_aggregated": fa, "f_scheduled": fs, "gap": fa - fs, "terms": terms }));
    }
    let mut block = Vec::new();
    for s in 0..5u64 {
        let seed = cfg.seed.wrapping_add(s);
        let (q, g) = block_diagonal_instance(3, 2, 3, seed);
        let th = vec![0.0; q.dim()];
        let eta = 1.0 / q.lipschitz();
        let a = q.aggregated_step(&th, &g, eta)?;
        let b = q.scheduled_refresh(&th, &g, eta)?;
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let (fa, fs) = (q.loss(&a), q.loss(&b));
        csv.push_str(&format!("block_diagonal_{seed},{eta},{fa},{fs},{},,,\n", fa - fs));
        block.push(json!({ "seed": seed, "eta": eta, "max_abs_diff": diff }));
    }
    let results = json!({ "lipschitz": l, "reference": reference, "block_diagonal": block });
    Ok(finish("sched_vs_agg", cfg, vec![("sched_vs_agg.csv".into(), csv)], results, Vec::new()))
}

fn convergence(cfg: &Config) -> Result<ExperimentOutput, ExperimentError> {
    let (quad, classes) = convergence_testbed(cfg.seed);
    let m = classes.len() as f64;
    let theta0 = vec![0.0; quad.dim()];
    let mut csv = String::from("# gradsched convergence v1\nsampling,horizon,min_mean_sq_grad,final_mean_sq_grad\n");
    let mut results = serde_json::Map::new();
    for (label, sampling) in [("randomized", ClassSampling::Randomized), ("cyclic", ClassSampling::Cyclic)] {
        let spec = ConvergenceSpec {
            horizons: CONVERGENCE_HORIZONS.to_vec(),
            seeds: CONVERGENCE_SEEDS,
            c: 1.0 / (m * quad.lipschitz()),
            sigma: CONVERGENCE_NOISE,
            sampling,
            seed: cfg.seed,
        };
        let r = convergence_experiment(&quad, &classes, &theta0, &spec)?;
        for p in &r.points {
            csv.push_str(&format!("{label},{},{},{}\n", p.horizon, p.min_mean_sq_grad, p.final_mean_sq_grad));
        }
        results.insert(label.into(), json!({ "c": spec.c, "slope": r.slope, "intercept": r.intercept, "points": r.points }));
    }
    Ok(finish("convergence", cfg, vec![("convergence.csv".into(), csv)], Value::Object(results), Vec::new()))
}

fn arm_config(cfg: &Config, run_index: usize) -> SchedulerConfig {
    SchedulerConfig {
        seed: trial_seed(cfg.seed, run_index),
        ..cfg.scheduler_config()
    }
}

/// Task 0 takes the mean of the last task halfway through the run.
pub fn drift_swap(cfg: &Config) -> GroupSwap {
    GroupSwap {
        at: cfg.steps / 2,
        tasks: vec![0],
        target: cfg.num_tasks - 1,
    }
}

fn ablation_static(cfg: &Config) -> Result<ExperimentOutput, ExperimentError> {
    let suite = suite(cfg)?;
    let mut csv = String::from("# gradsched ablation_static v1\narm,run,seed,stale_edge_violations,conflict_violations,windows\n");
    let mut runs = Vec::new();
    let mut totals = serde_json::Map::new();
    for (arm, freeze) in [("dynamic", false), ("static", true)] {
        let mut stale = 0;
        for i in 0..cfg.repeats {
            let scfg = SchedulerConfig {
                freeze_schedule: freeze,
                ..arm_config(cfg, i)
            };
            let mut oracle = PlantedOracle::new(suite.clone()).with_swap(drift_swap(cfg));
            let rec = run(&scfg, &mut oracle)?;
            let a = audit(&rec);
            stale += a.stale_edge_violations;
            csv.push_str(&format!(
                "{arm},{i},{},{},{},{}\n",
                scfg.seed,
                a.stale_edge_violations,
                a.conflict_violations,
                rec.windows.len()
            ));
            runs.push(rec);
        }
        totals.insert(arm.into(), json!({ "stale_edge_violations": stale }));
    }
    let results = json!({ "swap": { "at": cfg.steps / 2, "tasks": [0], "target": cfg.num_tasks - 1 }, "arms": totals });
    Ok(finish("ablation_static", cfg, vec![("ablation_static.csv".into(), csv)], results, runs))
}

fn partition(classes: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut p: Vec<Vec<usize>> = classes
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.sort_unstable();
            c
        })
        .collect();
    p.sort();
    p
}

/// Partition instability and graph recovery over the recolored windows of
/// one run: the fraction of windows whose partition differs from the
/// previous window's, and the fraction whose graph equals the population
/// graph at that window's threshold.
pub fn window_metrics(rec: &RunRecord, suite: &PlantedTaskSuite) -> (f64, f64) {
    let stats = GradStats::from_rows(&suite.mu.iter_rows().collect::<Vec<_>>(), 0.0).expect("valid means");
    let rho = stats.interference_matrix().expect("at least two tasks");
    let ws = &rec.windows[1..];
    if ws.is_empty() {
        return (0.0, 0.0);
    }
    let recovered = ws
        .iter()
        .filter(|w| {
            let truth = build_graph(&rho, w.tau).expect("tau in range");
            ConflictGraph::from_edges(rec.num_tasks, w.edges.iter().copied())
                .map(|g| g.same_edges(&truth))
                .unwrap_or(false)
        })
        .count();
    let changes = ws
        .windows(2)
        .filter(|p| partition(&p[0].classes) != partition(&p[1].classes))
        .count();
    let pairs = ws.len().saturating_sub(1).max(1);
    (changes as f64 / pairs as f64, recovered as f64 / ws.len() as f64)
}

fn ablation_singlestep(cfg: &Config) -> Result<ExperimentOutput, ExperimentError> {
    let suite = suite(cfg)?;
    let mut csv = String::from("# gradsched ablation_singlestep v1\narm,run,seed,beta,instability,recovery\n");
    let mut runs = Vec::new();
    let mut arms = serde_json::Map::new();
    for (arm, beta) in [("full_history", cfg.beta), ("single_step", 0.0)] {
        let (mut inst, mut rec_rate) = (0.0, 0.0);
        for i in 0..cfg.repeats {
            let scfg = SchedulerConfig { beta, ..arm_config(cfg, i) };
            let mut oracle = PlantedOracle::new(suite.clone());
            let rec = run(&scfg, &mut oracle)?;
            let (a, b) = window_metrics(&rec, &suite);
            csv.push_str(&format!("{arm},{i},{},{beta},{a},{b}\n", scfg.seed));
            inst += a;
            rec_rate += b;
            runs.push(rec);
        }
        let n = cfg.repeats as f64;
        arms.insert(arm.into(), json!({ "beta": beta, "instability": inst / n, "recovery": rec_rate / n }));
    }
    let results = Value::Object(arms);
    Ok(finish("ablation_singlestep", cfg, vec![("ablation_singlestep.csv".into(), csv)], results, runs))
}

/// Max within-window gap per task against the largest conflict degree of
/// any window.
pub fn staleness_bound_holds(rep: &AuditReport, rec: &RunRecord) -> bool {
    let delta = rec.windows.iter().map(|w| w.max_degree).max().unwrap_or(0);
    rep.per_task_max_gap.iter().all(|&g| g <= delta) && rep.staleness_violations == 0
}

fn staleness_audit(cfg: &Config) -> Result<ExperimentOutput, ExperimentError> {
    let mut oracle = PlantedOracle::new(suite(cfg)?);
    let rec = run(&cfg.scheduler_config(), &mut oracle)?;
    let rep = audit(&rec);
    let delta = rec.windows.iter().map(|w| w.max_degree).max().unwrap_or(0);
    let mut csv = String::from("# gradsched staleness v1\ntask,max_gap,max_degree\n");
    for (task, g) in rep.per_task_max_gap.iter().enumerate() {
        csv.push_str(&format!("{task},{g},{delta}\n"));
    }
    let results = json!({
        "max_degree": delta,
        "bound_holds": staleness_bound_holds(&rep, &rec),
        "audit": rep,
    });
    Ok(finish("staleness_audit", cfg, vec![("staleness_audit.csv".into(), csv), ("run.csv".into(), rec.to_csv())], results, vec![rec]))
}

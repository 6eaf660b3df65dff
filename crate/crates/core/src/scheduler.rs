//! The training loop: warm-up, threshold annealing, periodic refresh of the
//! conflict graph and its coloring, and one color class per step.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict_graph::{enforce_min_coverage, welsh_powell, AugmentedSchedule, ConflictGraph, GraphError};
use crate::grad_stats::{GradStats, GradStatsError, DEFAULT_NORM_FLOOR};
use crate::linalg::{axpy, norm, sum_vectors};
use crate::optim::{Combinator, CombinatorConfig};
use crate::record::{RunRecord, StepRecord, WindowRecord};
use crate::sim::descent_check;
use crate::sketch::{SketchConfig, SketchEngine, SketchError};

/// Relative slack for the per-step descent bound check.
pub const DESCENT_REL_TOL: f64 = 1e-9;

const COMBINATOR_STREAM: u64 = 0x5EED_0001;
const PERMUTE_STREAM: u64 = 0x5EED_0002;
const SKETCH_STREAM: u64 = 0x5EED_0003;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedulerError {
    #[error("invalid config field `{field}`: {msg}")]
    InvalidConfig { field: &'static str, msg: String },
    #[error("no gradient supplied for active task {0}")]
    MissingGradient(usize),
    #[error("gradient supplied for task {0}, which is not active")]
    UnexpectedGradient(usize),
    #[error("{what} has dimension {got}, expected {expected}")]
    DimensionMismatch { what: String, expected: usize, got: usize },
    #[error("expected {expected} probe gradients, got {got}")]
    ProbeCount { expected: usize, got: usize },
    #[error(transparent)]
    Stats(#[from] GradStatsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

fn invalid(field: &'static str, msg: impl Into<String>) -> SchedulerError {
    SchedulerError::InvalidConfig { field, msg: msg.into() }
}

/// Logarithmic decay of τ from 1 to τ* over `horizon` steps after warm-up:
/// `τ(s) = 1 − (1 − τ*) · ln(1 + a·s/S) / ln(1 + a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealCurve {
    pub curvature: f64,
    /// Steps from the end of warm-up to τ*; `None` means `4R`.
    pub horizon: Option<usize>,
}

impl Default for AnnealCurve {
    fn default() -> Self {
        Self {
            curvature: 9.0,
            horizon: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum StepSize {
    Constant(f64),
    /// `c / √T`.
    InvSqrtT(f64),
}

impl StepSize {
    pub fn eta(&self, total_steps: usize) -> f64 {
        match *self {
            StepSize::Constant(eta) => eta,
            StepSize::InvSqrtT(c) => c / (total_steps.max(1) as f64).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub tau_star: f64,
    pub warmup: usize,
    pub anneal: AnnealCurve,
    /// Steps between refreshes (`R`).
    pub refresh_period: usize,
    pub beta: f64,
    pub f_min: usize,
    pub step_size: StepSize,
    pub total_steps: usize,
    pub seed: u64,
    pub norm_floor: f64,
    /// Shuffle the execution order of the classes at every refresh.
    pub permute_classes: bool,
    /// Keep the first post-warm-up schedule for the rest of the run; later
    /// refreshes still rebuild the graph for auditing.
    pub freeze_schedule: bool,
    pub sketch: SketchConfig,
    pub combinator: CombinatorConfig,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            tau_star: 0.5,
            warmup: 0,
            anneal: AnnealCurve::default(),
            refresh_period: 32,
            beta: 0.9,
            f_min: 1,
            step_size: StepSize::Constant(0.01),
            total_steps: 900,
            seed: 0,
            norm_floor: DEFAULT_NORM_FLOOR,
            permute_classes: false,
            freeze_schedule: false,
            sketch: SketchConfig::default(),
            combinator: CombinatorConfig::default(),
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        if !(self.tau_star > 0.0 && self.tau_star < 1.0) {
            return Err(invalid("tau_star", format!("must lie in (0, 1), got {}", self.tau_star)));
        }
        if self.refresh_period < 1 {
            return Err(invalid("refresh_period", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(invalid("beta", format!("must lie in [0, 1), got {}", self.beta)));
        }
        if self.f_min < 1 {
            return Err(invalid("f_min", "must be at least 1"));
        }
        if self.total_steps > 0 && self.warmup >= self.total_steps {
            return Err(invalid(
                "warmup",
                format!("must be below total_steps ({}), got {}", self.total_steps, self.warmup),
            ));
        }
        if !(self.anneal.curvature > 0.0) {
            return Err(invalid("anneal.curvature", format!("must be positive, got {}", self.anneal.curvature)));
        }
        if self.anneal.horizon == Some(0) {
            return Err(invalid("anneal.horizon", "must be at least 1"));
        }
        let eta = self.step_size.eta(self.total_steps);
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(invalid("step_size", format!("must give a positive step, got {eta}")));
        }
        if !(self.norm_floor >= 0.0) {
            return Err(invalid("norm_floor", format!("must be nonnegative, got {}", self.norm_floor)));
        }
        self.sketch.validate().map_err(|e| invalid("sketch", e.to_string()))?;
        self.combinator.validate().map_err(|e| invalid("combinator", e))?;
        Ok(())
    }

    pub fn anneal_horizon(&self) -> usize {
        self.anneal.horizon.unwrap_or(4 * self.refresh_period).max(1)
    }

    /// Threshold in force at step `t`: 1 during warm-up, then the log curve,
    /// clamped to τ* from the horizon on.
    pub fn anneal_tau(&self, t: usize) -> f64 {
        if t < self.warmup {
            return 1.0;
        }
        let s = (t - self.warmup) as f64;
        let horizon = self.anneal_horizon() as f64;
        if s >= horizon {
            return self.tau_star;
        }
        let a = self.anneal.curvature;
        let frac = (a * s / horizon).ln_1p() / a.ln_1p();
        (1.0 - (1.0 - self.tau_star) * frac).max(self.tau_star)
    }

    pub fn eta(&self) -> f64 {
        self.step_size.eta(self.total_steps)
    }
}

/// One task's contribution to a step.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskGradient {
    pub loss: f64,
    /// Gradient with respect to the shared parameters.
    pub shared: Vec<f64>,
    /// Gradient with respect to the task's own parameters.
    pub head: Vec<f64>,
}

/// Source of per-task losses and gradients.
pub trait GradientOracle {
    fn num_tasks(&self) -> usize;

    fn shared_dim(&self) -> usize;

    fn head_dim(&self, _task: usize) -> usize {
        0
    }

    fn initial_shared(&self) -> Vec<f64> {
        vec![0.0; self.shared_dim()]
    }

    /// Called once at the start of every step.
    fn begin_step(&mut self, _t: usize) {}

    fn gradient(&mut self, task: usize, shared: &[f64], head: &[f64], rng: &mut ChaCha8Rng) -> TaskGradient;

    /// Fresh shared-parameter gradient used to advance the EMA at a refresh.
    fn probe(&mut self, task: usize, shared: &[f64], head: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.gradient(task, shared, head, rng).shared
    }
}

/// Update for one active task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskUpdate {
    pub task: usize,
    pub shared: Vec<f64>,
    pub head: Vec<f64>,
}

/// Mutable scheduler state between steps.
#[derive(Clone, Debug)]
pub struct SchedulerState {
    cfg: SchedulerConfig,
    stats: GradStats,
    theta: Vec<f64>,
    heads: Vec<Vec<f64>>,
    round: usize,
    round_start: usize,
    schedule: AugmentedSchedule,
    graph: ConflictGraph,
    locked: bool,
    engine: SketchEngine,
    perm_rng: ChaCha8Rng,
    windows: Vec<WindowRecord>,
}

impl SchedulerState {
    /// Starts with the all-task class, as if an initial refresh had found a
    /// degenerate matrix.
    pub fn new(
        cfg: SchedulerConfig,
        theta: Vec<f64>,
        head_dims: &[usize],
    ) -> Result<Self, SchedulerError> {
        cfg.validate()?;
        let k = head_dims.len();
        let stats = GradStats::new(k, theta.len(), cfg.beta)?.with_norm_floor(cfg.norm_floor)?;
        let engine = SketchEngine::new(cfg.sketch.clone(), cfg.seed ^ SKETCH_STREAM)?;
        let schedule = AugmentedSchedule::all_tasks(k);
        let windows = vec![WindowRecord {
            start: 0,
            tau: 1.0,
            edges: Vec::new(),
            max_degree: 0,
            classes: schedule.base_classes().to_vec(),
            slots: (0..schedule.period()).map(|s| schedule.slot(s)).collect(),
            coverage_failures: Vec::new(),
            fallback: true,
            frozen: false,
            uncertified: Vec::new(),
        }];
        Ok(Self {
            perm_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ PERMUTE_STREAM),
            cfg,
            stats,
            theta,
            heads: head_dims.iter().map(|&h| vec![0.0; h]).collect(),
            round: 0,
            round_start: 0,
            schedule,
            graph: ConflictGraph::empty(k),
            locked: false,
            engine,
            windows,
        })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.cfg
    }

    pub fn num_tasks(&self) -> usize {
        self.heads.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn head(&self, task: usize) -> &[f64] {
        &self.heads[task]
    }

    pub fn stats(&self) -> &GradStats {
        &self.stats
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn round_start(&self) -> usize {
        self.round_start
    }

    pub fn schedule(&self) -> &AugmentedSchedule {
        &self.schedule
    }

    pub fn graph(&self) -> &ConflictGraph {
        &self.graph
    }

    pub fn windows(&self) -> &[WindowRecord] {
        &self.windows
    }

    pub fn sketch_engine(&self) -> &SketchEngine {
        &self.engine
    }

    /// Active tasks at step `t`: slot `(t − t_r) mod m` of the current
    /// schedule, including coverage duplicates.
    pub fn active_set(&self, t: usize) -> Vec<usize> {
        let m = self.schedule.period();
        self.schedule.slot(t.saturating_sub(self.round_start) % m)
    }

    /// Feeds one gradient into the task's EMA.
    pub fn observe(&mut self, task: usize, grad: &[f64]) -> Result<(), SchedulerError> {
        Ok(self.stats.update(task, grad)?)
    }

    /// `θ ← θ − η Σ g_k` and `φ_k ← φ_k − η h_k` over the active set. The
    /// updates must cover exactly the active tasks.
    pub fn apply_update(&mut self, active: &[usize], updates: &[TaskUpdate], eta: f64) -> Result<(), SchedulerError> {
        for u in updates {
            if !active.contains(&u.task) {
                return Err(SchedulerError::UnexpectedGradient(u.task));
            }
            if u.shared.len() != self.theta.len() {
                return Err(SchedulerError::DimensionMismatch {
                    what: format!("shared gradient of task {}", u.task),
                    expected: self.theta.len(),
                    got: u.shared.len(),
                });
            }
            if u.head.len() != self.heads[u.task].len() {
                return Err(SchedulerError::DimensionMismatch {
                    what: format!("head gradient of task {}", u.task),
                    expected: self.heads[u.task].len(),
                    got: u.head.len(),
                });
            }
        }
        if let Some(&k) = active.iter().find(|&&k| !updates.iter().any(|u| u.task == k)) {
            return Err(SchedulerError::MissingGradient(k));
        }
        let total = sum_vectors(self.theta.len(), updates.iter().map(|u| u.shared.as_slice()));
        axpy(-eta, &total, &mut self.theta);
        for u in updates {
            axpy(-eta, &u.head, &mut self.heads[u.task]);
        }
        Ok(())
    }

    /// `θ ← θ − η · direction`, for callers that combine the active
    /// gradients themselves.
    pub fn descend(&mut self, direction: &[f64], eta: f64) -> Result<(), SchedulerError> {
        if direction.len() != self.theta.len() {
            return Err(SchedulerError::DimensionMismatch {
                what: "update direction".into(),
                expected: self.theta.len(),
                got: direction.len(),
            });
        }
        axpy(-eta, direction, &mut self.theta);
        Ok(())
    }

    /// Advances every EMA by one probe gradient, rebuilds the graph at the
    /// threshold in force at `t_next`, recolors, and starts a new window
    /// there.
    pub fn refresh(&mut self, t_next: usize, probes: &[Vec<f64>]) -> Result<&WindowRecord, SchedulerError> {
        let k = self.num_tasks();
        if probes.len() != k {
            return Err(SchedulerError::ProbeCount {
                expected: k,
                got: probes.len(),
            });
        }
        for (task, g) in probes.iter().enumerate() {
            self.stats.update(task, g)?;
        }
        let tau = self.cfg.anneal_tau(t_next);
        let built = match self.engine.conflict_graph(&self.stats, tau) {
            Ok(g) => Some(g),
            Err(SketchError::Stats(GradStatsError::DegenerateMatrix { .. })) => None,
            Err(e) => return Err(e.into()),
        };
        let frozen = self.locked;
        let window = match built {
            None => {
                self.graph = ConflictGraph::empty(k);
                if !frozen {
                    self.schedule = AugmentedSchedule::all_tasks(k);
                }
                self.window_record(t_next, tau, true, frozen, Vec::new())
            }
            Some(sg) => {
                self.graph = sg.graph;
                if !frozen {
                    let mut coloring = welsh_powell(&self.graph);
                    if self.cfg.permute_classes {
                        let mut order: Vec<usize> = (0..coloring.num_colors()).collect();
                        order.shuffle(&mut self.perm_rng);
                        coloring = coloring.permuted(&order);
                    }
                    self.schedule = enforce_min_coverage(&coloring, &self.graph, self.cfg.f_min)?;
                    self.locked = self.cfg.freeze_schedule && tau < 1.0;
                }
                self.window_record(t_next, tau, false, frozen, sg.uncertified)
            }
        };
        self.round += 1;
        self.round_start = t_next;
        self.windows.push(window);
        Ok(self.windows.last().expect("just pushed"))
    }

    fn window_record(
        &self,
        start: usize,
        tau: f64,
        fallback: bool,
        frozen: bool,
        uncertified: Vec<(usize, usize)>,
    ) -> WindowRecord {
        let s = &self.schedule;
        WindowRecord {
            start,
            tau,
            edges: self.graph.edge_pairs(),
            max_degree: self.graph.max_degree(),
            classes: s.base_classes().to_vec(),
            slots: (0..s.period()).map(|i| s.slot(i)).collect(),
            coverage_failures: s.coverage_failures().to_vec(),
            fallback,
            frozen,
            uncertified,
        }
    }
}

/// Runs `cfg.total_steps` steps against `oracle`.
pub fn run<O: GradientOracle + ?Sized>(cfg: &SchedulerConfig, oracle: &mut O) -> Result<RunRecord, SchedulerError> {
    let k = oracle.num_tasks();
    let head_dims: Vec<usize> = (0..k).map(|i| oracle.head_dim(i)).collect();
    let theta0 = oracle.initial_shared();
    if theta0.len() != oracle.shared_dim() {
        return Err(SchedulerError::DimensionMismatch {
            what: "initial shared parameters".into(),
            expected: oracle.shared_dim(),
            got: theta0.len(),
        });
    }
    let mut state = SchedulerState::new(cfg.clone(), theta0, &head_dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut combinator = Combinator::new(cfg.combinator.clone(), k, cfg.seed ^ COMBINATOR_STREAM);
    let eta = cfg.eta();
    let r = cfg.refresh_period;
    let mut steps = Vec::with_capacity(cfg.total_steps);
    let mut descent_violations = 0;

    for t in 0..cfg.total_steps {
        oracle.begin_step(t);
        let tau = cfg.anneal_tau(t);
        let active = state.active_set(t);
        let m = state.schedule().period();
        let window = state.windows().len() - 1;

        let mut loss = 0.0;
        let mut shared = Vec::with_capacity(active.len());
        let mut heads = Vec::with_capacity(active.len());
        for &task in &active {
            let g = oracle.gradient(task, state.theta(), state.head(task), &mut rng);
            loss += g.loss;
            shared.push(g.shared);
            heads.push(g.head);
        }
        let total = sum_vectors(state.theta().len(), shared.iter().map(Vec::as_slice));
        let grad_norm = norm(&total);
        if !descent_check(&shared, tau, DESCENT_REL_TOL).ok {
            descent_violations += 1;
        }
        for (&task, g) in active.iter().zip(&shared) {
            state.observe(task, g)?;
        }

        let transformed = combinator.apply(&active, shared);
        let updates: Vec<TaskUpdate> = active
            .iter()
            .zip(transformed)
            .zip(heads)
            .map(|((&task, shared), head)| TaskUpdate { task, shared, head })
            .collect();
        state.apply_update(&active, &updates, eta)?;

        let refresh = (t + 1) % r == 0;
        if refresh {
            let probes: Vec<Vec<f64>> = (0..k)
                .map(|task| oracle.probe(task, state.theta(), state.head(task), &mut rng))
                .collect();
            state.refresh(t + 1, &probes)?;
        }
        steps.push(StepRecord {
            t,
            tau,
            m,
            active,
            loss,
            grad_norm,
            refresh,
            window,
        });
    }

    Ok(RunRecord {
        config: cfg.clone(),
        num_tasks: k,
        combinator: cfg.combinator.mode,
        steps,
        windows: state.windows().to_vec(),
        sketch_cost: state.sketch_engine().cost(),
        descent_violations,
        final_theta: state.theta().to_vec(),
    })
}

/// Findings of [`audit`] over one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Steps whose active set contains an edge of the graph their schedule
    /// was colored from (for frozen windows, the window that locked it).
    pub conflict_violations: usize,
    /// Steps whose active set contains an edge of the graph rebuilt at
    /// their own window. Equal to `conflict_violations` unless the schedule
    /// is frozen.
    pub stale_edge_violations: usize,
    /// Schedule slots (in any window) that contain both ends of an edge.
    pub slot_violations: usize,
    /// Steps where τ is not 1 during warm-up, increases after warm-up, or
    /// departs from τ* past the horizon.
    pub tau_violations: usize,
    /// Largest number of steps any task waited between updates within a
    /// window, measured from the window start.
    pub max_gap: usize,
    /// Windows in which some task waited longer than `m − 1` steps, or
    /// where `m − 1` exceeded the window's maximum degree.
    pub staleness_violations: usize,
    /// Largest `m − 1` over windows with a recolored schedule.
    pub max_period_minus_one: usize,
    /// Largest within-window gap of each task.
    pub per_task_max_gap: Vec<usize>,
}

impl AuditReport {
    pub fn clean(&self) -> bool {
        self.conflict_violations == 0
            && self.slot_violations == 0
            && self.tau_violations == 0
            && self.staleness_violations == 0
    }
}

/// Checks a run log against the schedule guarantees.
pub fn audit(rec: &RunRecord) -> AuditReport {
    let mut rep = AuditReport::default();
    let cfg = &rec.config;
    let conflicting = |set: &[usize], edges: &[(usize, usize)]| {
        edges.iter().any(|(i, j)| set.contains(i) && set.contains(j))
    };
    for w in &rec.windows {
        rep.slot_violations += w.slots.iter().filter(|s| !w.frozen && conflicting(s, &w.edges)).count();
    }
    let mut source = Vec::with_capacity(rec.windows.len());
    for (i, w) in rec.windows.iter().enumerate() {
        let src = if w.frozen { source.last().copied().unwrap_or(i) } else { i };
        source.push(src);
    }
    let mut prev_tau: Option<f64> = None;
    for s in &rec.steps {
        let w = &rec.windows[s.window];
        if conflicting(&s.active, &rec.windows[source[s.window]].edges) {
            rep.conflict_violations += 1;
        }
        if conflicting(&s.active, &w.edges) {
            rep.stale_edge_violations += 1;
        }
        let bad_tau = if s.t < cfg.warmup {
            s.tau != 1.0
        } else if s.t >= cfg.warmup + cfg.anneal_horizon() {
            s.tau != cfg.tau_star
        } else {
            prev_tau.is_some_and(|p| s.tau > p)
        };
        if bad_tau {
            rep.tau_violations += 1;
        }
        prev_tau = Some(s.tau);
    }

    // Staleness per window.
    let k = rec.num_tasks;
    rep.per_task_max_gap = vec![0; k];
    let mut wi = 0;
    while wi < rec.windows.len() {
        let steps: Vec<&StepRecord> = rec.steps.iter().filter(|s| s.window == wi).collect();
        wi += 1;
        let Some(first) = steps.first() else { continue };
        let m = first.m;
        if steps.len() < m {
            continue;
        }
        let w = &rec.windows[first.window];
        if !w.frozen && !w.fallback {
            rep.max_period_minus_one = rep.max_period_minus_one.max(m - 1);
            if m - 1 > w.max_degree {
                rep.staleness_violations += 1;
                continue;
            }
        }
        let start = first.t;
        let end = start + steps.len();
        let mut window_bad = false;
        for task in 0..k {
            let mut last = None::<usize>;
            let mut worst = 0;
            for s in &steps {
                if s.active.contains(&task) {
                    let gap = match last {
                        Some(l) => s.t - l - 1,
                        None => s.t - start,
                    };
                    worst = worst.max(gap);
                    last = Some(s.t);
                }
            }
            // Tail: steps after the last update, only counted when a full
            // period elapsed without one.
            let tail = match last {
                Some(l) => end - l - 1,
                None => steps.len(),
            };
            if tail >= m {
                worst = worst.max(tail);
            }
            rep.max_gap = rep.max_gap.max(worst);
            rep.per_task_max_gap[task] = rep.per_task_max_gap[task].max(worst);
            if worst > m - 1 {
                window_bad = true;
            }
        }
        if window_bad {
            rep.staleness_violations += 1;
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SchedulerConfig {
        SchedulerConfig {
            tau_star: 0.5,
            warmup: 100,
            refresh_period: 10,
            total_steps: 1000,
            ..SchedulerConfig::default()
        }
    }

    #[test]
    fn anneal_endpoints_and_midpoint() {
        let c = cfg();
        assert_eq!(c.anneal_tau(0), 1.0);
        assert_eq!(c.anneal_tau(99), 1.0);
        assert_eq!(c.anneal_tau(100), 1.0);
        assert_eq!(c.anneal_horizon(), 40);
        assert_eq!(c.anneal_tau(140), 0.5);
        assert_eq!(c.anneal_tau(10_000), 0.5);
        // 1 − 0.5 · ln(5.5) / ln(10)
        let want = 1.0 - 0.5 * 5.5_f64.ln() / 10.0_f64.ln();
        assert!((c.anneal_tau(120) - want).abs() < 1e-15);
        assert!((want - 0.629819).abs() < 1e-6);
    }

    #[test]
    fn anneal_is_monotone() {
        let c = cfg();
        let taus: Vec<f64> = (0..300).map(|t| c.anneal_tau(t)).collect();
        assert!(taus.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn validation_names_field() {
        let mut c = cfg();
        c.tau_star = 1.5;
        match c.validate().unwrap_err() {
            SchedulerError::InvalidConfig { field, msg } => {
                assert_eq!(field, "tau_star");
                assert!(msg.contains("(0, 1)"));
            }
            e => panic!("{e}"),
        }
        let mut c = cfg();
        c.refresh_period = 0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.warmup = 1000;
        assert!(c.validate().is_err());
    }

    #[test]
    fn active_set_cycles() {
        let mut st = SchedulerState::new(cfg(), vec![0.0; 2], &[0; 6]).unwrap();
        assert_eq!(st.active_set(0), vec![0, 1, 2, 3, 4, 5]);
        // Force a 3-class schedule through a refresh on orthogonal/antipodal
        // probes.
        let probes = vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![1.0, 0.01],
            vec![-1.0, 0.01],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ];
        let mut c = cfg();
        c.warmup = 0;
        c.beta = 0.0;
        st = SchedulerState::new(c, vec![0.0; 2], &[0; 6]).unwrap();
        st.refresh(20, &probes).unwrap();
        assert_eq!(st.schedule().period(), 2);
        assert_eq!(st.round_start(), 20);
        assert_eq!(st.active_set(20), st.schedule().slot(0));
        assert_eq!(st.active_set(23), st.schedule().slot(1));
    }

    #[test]
    fn apply_update_examples() {
        let mut st = SchedulerState::new(cfg(), vec![0.0, 0.0], &[1, 1]).unwrap();
        st.apply_update(&[], &[], 0.1).unwrap();
        assert_eq!(st.theta(), &[0.0, 0.0]);
        let u = |task, shared: Vec<f64>| TaskUpdate {
            task,
            shared,
            head: vec![1.0],
        };
        st.apply_update(&[0], &[u(0, vec![1.0, 0.0])], 0.1).unwrap();
        assert_eq!(st.theta(), &[-0.1, 0.0]);
        assert_eq!(st.head(0), &[-0.1]);
        assert_eq!(st.head(1), &[0.0]);
        st.apply_update(&[0, 1], &[u(0, vec![1.0, 0.0]), u(1, vec![0.0, 1.0])], 1.0).unwrap();
        assert_eq!(st.theta(), &[-1.1, -1.0]);
        assert_eq!(
            st.apply_update(&[0, 1], &[u(0, vec![1.0, 0.0])], 1.0).unwrap_err(),
            SchedulerError::MissingGradient(1)
        );
        assert_eq!(
            st.apply_update(&[0], &[u(1, vec![1.0, 0.0])], 1.0).unwrap_err(),
            SchedulerError::UnexpectedGradient(1)
        );
    }

    #[test]
    fn refresh_examples() {
        let mut c = cfg();
        c.warmup = 0;
        c.beta = 0.0;
        // Identical probes: empty graph.
        let mut st = SchedulerState::new(c.clone(), vec![0.0; 2], &[0; 4]).unwrap();
        st.refresh(40, &vec![vec![1.0, 1.0]; 4]).unwrap();
        assert_eq!(st.schedule().period(), 1);
        // Two antipodal clusters.
        let probes = vec![vec![1.0, 0.0], vec![1.0, 0.1], vec![-1.0, 0.0], vec![-1.0, 0.1]];
        st.refresh(80, &probes).unwrap();
        assert_eq!(st.schedule().base_classes(), &[vec![0, 1], vec![2, 3]]);
        // Warm-up threshold: no edges.
        c.warmup = 100;
        let mut st = SchedulerState::new(c, vec![0.0; 2], &[0; 4]).unwrap();
        st.refresh(10, &probes).unwrap();
        assert_eq!(st.graph().num_edges(), 0);
        assert_eq!(st.schedule().period(), 1);
    }

    #[test]
    fn degenerate_refresh_falls_back() {
        let mut c = cfg();
        c.warmup = 0;
        let mut st = SchedulerState::new(c, vec![0.0; 2], &[0; 3]).unwrap();
        let w = st.refresh(10, &vec![vec![0.0, 0.0]; 3]).unwrap();
        assert!(w.fallback);
        assert_eq!(st.schedule().period(), 1);
    }
}

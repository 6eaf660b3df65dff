//! Flat key-value configuration shared by the experiment drivers, the
//! benchmark harness and the command line.
//!
//! One `key = value` per line, `#` starts a comment. A key may carry its
//! type, `key:float = 0.5`; when present it must match the key's declared
//! type. Unknown and repeated keys are rejected. [`Config::emit`] writes
//! every key with its type and [`Config::parse`] reads it back unchanged.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::{CombinatorConfig, CombinatorMode};
use crate::scheduler::{AnnealCurve, SchedulerConfig, StepSize};
use crate::sim::PlantedSpec;
use crate::sketch::{SketchConfig, SketchMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueType {
    Int,
    Float,
    Bool,
    Str,
    IntList,
}

impl ValueType {
    pub fn name(self) -> &'static str {
        match self {
            ValueType::Int => "int",
            ValueType::Float => "float",
            ValueType::Bool => "bool",
            ValueType::Str => "str",
            ValueType::IntList => "ints",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [ValueType::Int, ValueType::Float, ValueType::Bool, ValueType::Str, ValueType::IntList]
            .into_iter()
            .find(|t| t.name() == s)
    }
}

/// One problem with a config, tied to a key and, when parsed from text, a
/// line number.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub line: Option<usize>,
    pub msg: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.field, self.msg),
            None => write!(f, "`{}`: {}", self.field, self.msg),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("invalid config: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct ConfigError(pub Vec<Diagnostic>);

/// Key name, declared type and help text, in emission order.
pub const KEYS: &[(&str, ValueType, &str)] = &[
    ("K", ValueType::Int, "number of tasks"),
    ("d", ValueType::Int, "gradient dimension"),
    ("groups", ValueType::Int, "planted groups"),
    ("tau_star", ValueType::Float, "target conflict threshold, in (0, 1)"),
    ("gamma", ValueType::Float, "planted separation margin"),
    ("sigma", ValueType::Float, "gradient noise scale"),
    ("m0", ValueType::Float, "norm of planted mean gradients"),
    ("jitter_deg", ValueType::Float, "max angle of a task mean from its group center"),
    ("beta", ValueType::Float, "EMA parameter, in [0, 1)"),
    ("R", ValueType::Int, "refresh period in steps"),
    ("f_min", ValueType::Int, "minimum activations per task per window"),
    ("warmup", ValueType::Int, "steps with tau = 1"),
    ("anneal_horizon", ValueType::Int, "steps from end of warm-up to tau_star; 0 means 4R"),
    ("steps", ValueType::Int, "training steps"),
    ("eta", ValueType::Float, "step size, or c for eta_rule = inv_sqrt_t"),
    ("eta_rule", ValueType::Str, "constant | inv_sqrt_t"),
    ("seed", ValueType::Int, "run seed"),
    ("sketch_mode", ValueType::Str, "dense | jl | fd | edge_sample | incremental"),
    ("jl_dim", ValueType::Int, "JL projection dimension"),
    ("fd_rows", ValueType::Int, "Frequent Directions sketch rows"),
    ("epsilon", ValueType::Float, "sketch accuracy target"),
    ("pair_budget", ValueType::Int, "edge-sampling pair budget"),
    ("change_threshold", ValueType::Float, "relative row drift that marks a Gram row stale"),
    ("combinator", ValueType::Str, "none | project | adaptive_scale | project_and_scale"),
    ("permute_classes", ValueType::Bool, "shuffle class order at each refresh"),
    ("freeze_schedule", ValueType::Bool, "keep the first post-warm-up schedule"),
    ("repeats", ValueType::Int, "bench repeats, or runs per ablation arm"),
    ("bench_K", ValueType::IntList, "task counts for the benchmark"),
    ("bench_R", ValueType::IntList, "refresh periods for the benchmark"),
    ("bench_d", ValueType::Int, "gradient dimension for the benchmark"),
    ("trials", ValueType::Int, "Monte-Carlo trials per point"),
    ("delta", ValueType::Float, "recovery failure probability"),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    #[serde(rename = "K")]
    pub num_tasks: usize,
    pub d: usize,
    pub groups: usize,
    pub tau_star: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub m0: f64,
    pub jitter_deg: f64,
    pub beta: f64,
    #[serde(rename = "R")]
    pub refresh_period: usize,
    pub f_min: usize,
    pub warmup: usize,
    pub anneal_horizon: usize,
    pub steps: usize,
    pub eta: f64,
    pub eta_rule: String,
    pub seed: u64,
    pub sketch_mode: String,
    pub jl_dim: usize,
    pub fd_rows: usize,
    pub epsilon: f64,
    pub pair_budget: u64,
    pub change_threshold: f64,
    pub combinator: String,
    pub permute_classes: bool,
    pub freeze_schedule: bool,
    pub repeats: usize,
    #[serde(rename = "bench_K")]
    pub bench_k: Vec<usize>,
    #[serde(rename = "bench_R")]
    pub bench_r: Vec<usize>,
    pub bench_d: usize,
    pub trials: usize,
    pub delta: f64,
}

impl Default for Config {
    fn default() -> Self {
        let s = SketchConfig::default();
        Self {
            num_tasks: 8,
            d: 16,
            groups: 2,
            tau_star: 0.5,
            gamma: 0.3,
            sigma: 1.0,
            m0: 1.0,
            jitter_deg: 0.0,
            beta: 0.9,
            refresh_period: 32,
            f_min: 1,
            warmup: 0,
            anneal_horizon: 0,
            steps: 900,
            eta: 0.01,
            eta_rule: "constant".into(),
            seed: 0,
            sketch_mode: "dense".into(),
            jl_dim: s.jl_dim,
            fd_rows: s.fd_rows,
            epsilon: s.epsilon,
            pair_budget: s.pair_budget as u64,
            change_threshold: s.change_threshold,
            combinator: "none".into(),
            permute_classes: false,
            freeze_schedule: false,
            repeats: 10,
            bench_k: vec![3, 6, 16, 40],
            bench_r: vec![4, 32, 256],
            bench_d: 1024,
            trials: 500,
            delta: 0.1,
        }
    }
}

fn parse_value<T: FromStr>(raw: &str, ty: ValueType) -> Result<T, String> {
    raw.parse().map_err(|_| format!("expected {}, got {raw:?}", ty.name()))
}

fn parse_list(raw: &str) -> Result<Vec<usize>, String> {
    raw.split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("expected comma-separated ints, got {raw:?}")))
        .collect()
}

impl Config {
    fn key_type(key: &str) -> Option<ValueType> {
        KEYS.iter().find(|(k, _, _)| *k == key).map(|&(_, t, _)| t)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), String> {
        let ty = Self::key_type(key).ok_or_else(|| format!("unknown key; known keys: {}", key_list()))?;
        let raw = raw.trim();
        macro_rules! v {
            () => {
                parse_value(raw, ty)?
            };
        }
        match key {
            "K" => self.num_tasks = v!(),
            "d" => self.d = v!(),
            "groups" => self.groups = v!(),
            "tau_star" => self.tau_star = v!(),
            "gamma" => self.gamma = v!(),
            "sigma" => self.sigma = v!(),
            "m0" => self.m0 = v!(),
            "jitter_deg" => self.jitter_deg = v!(),
            "beta" => self.beta = v!(),
            "R" => self.refresh_period = v!(),
            "f_min" => self.f_min = v!(),
            "warmup" => self.warmup = v!(),
            "anneal_horizon" => self.anneal_horizon = v!(),
            "steps" => self.steps = v!(),
            "eta" => self.eta = v!(),
            "eta_rule" => self.eta_rule = raw.to_string(),
            "seed" => self.seed = v!(),
            "sketch_mode" => self.sketch_mode = raw.to_string(),
            "jl_dim" => self.jl_dim = v!(),
            "fd_rows" => self.fd_rows = v!(),
            "epsilon" => self.epsilon = v!(),
            "pair_budget" => self.pair_budget = v!(),
            "change_threshold" => self.change_threshold = v!(),
            "combinator" => self.combinator = raw.to_string(),
            "permute_classes" => self.permute_classes = v!(),
            "freeze_schedule" => self.freeze_schedule = v!(),
            "repeats" => self.repeats = v!(),
            "bench_K" => self.bench_k = parse_list(raw)?,
            "bench_R" => self.bench_r = parse_list(raw)?,
            "bench_d" => self.bench_d = v!(),
            "trials" => self.trials = v!(),
            "delta" => self.delta = v!(),
            _ => unreachable!("key table and setter disagree on {key}"),
        }
        Ok(())
    }

    /// Current value of a key in the textual form accepted by [`Config::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        let list = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        Some(match key {
            "K" => self.num_tasks.to_string(),
            "d" => self.d.to_string(),
            "groups" => self.groups.to_string(),
            "tau_star" => self.tau_star.to_string(),
            "gamma" => self.gamma.to_string(),
            "sigma" => self.sigma.to_string(),
            "m0" => self.m0.to_string(),
            "jitter_deg" => self.jitter_deg.to_string(),
            "beta" => self.beta.to_string(),
            "R" => self.refresh_period.to_string(),
            "f_min" => self.f_min.to_string(),
            "warmup" => self.warmup.to_string(),
            "anneal_horizon" => self.anneal_horizon.to_string(),
            "steps" => self.steps.to_string(),
            "eta" => self.eta.to_string(),
            "eta_rule" => self.eta_rule.clone(),
            "seed" => self.seed.to_string(),
            "sketch_mode" => self.sketch_mode.clone(),
            "jl_dim" => self.jl_dim.to_string(),
            "fd_rows" => self.fd_rows.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "pair_budget" => self.pair_budget.to_string(),
            "change_threshold" => self.change_threshold.to_string(),
            "combinator" => self.combinator.clone(),
            "permute_classes" => self.permute_classes.to_string(),
            "freeze_schedule" => self.freeze_schedule.to_string(),
            "repeats" => self.repeats.to_string(),
            "bench_K" => list(&self.bench_k),
            "bench_R" => list(&self.bench_r),
            "bench_d" => self.bench_d.to_string(),
            "trials" => self.trials.to_string(),
            "delta" => self.delta.to_string(),
            _ => return None,
        })
    }

    /// Parses config text over the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        cfg.apply_text(text)?;
        cfg.validated()
    }

    /// Applies config text on top of `self` without validating.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut diags = Vec::new();
        let mut seen: Vec<String> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let diag = |field: &str, msg: String| Diagnostic {
                field: field.to_string(),
                line: Some(lineno),
                msg,
            };
            let Some((lhs, raw)) = body.split_once('=') else {
                diags.push(diag(body, "expected `key = value`".into()));
                continue;
            };
            let (key, annotated) = match lhs.split_once(':') {
                Some((k, t)) => (k.trim(), Some(t.trim())),
                None => (lhs.trim(), None),
            };
            let Some(declared) = Self::key_type(key) else {
                diags.push(diag(key, format!("unknown key; known keys: {}", key_list())));
                continue;
            };
            if let Some(t) = annotated {
                match ValueType::from_name(t) {
                    Some(ty) if ty == declared => {}
                    Some(_) | None => {
                        diags.push(diag(key, format!("annotated type `{t}` but the key is `{}`", declared.name())));
                        continue;
                    }
                }
            }
            if seen.iter().any(|k| k == key) {
                diags.push(diag(key, "given more than once".into()));
                continue;
            }
            seen.push(key.to_string());
            if let Err(msg) = self.set(key, raw) {
                diags.push(diag(key, msg));
            }
        }
        if diags.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(diags))
        }
    }

    /// Every key with its type annotation, in table order.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for &(key, ty, _) in KEYS {
            out.push_str(&format!("{key}:{} = {}\n", ty.name(), self.get(key).expect("known key")));
        }
        out
    }

    pub fn validated(self) -> Result<Self, ConfigError> {
        let diags = self.diagnostics();
        if diags.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError(diags))
        }
    }

    /// All field-level problems.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut check = |ok: bool, field: &str, msg: String| {
            if !ok {
                out.push(Diagnostic {
                    field: field.into(),
                    line: None,
                    msg,
                });
            }
        };
        check(self.num_tasks >= 2, "K", format!("must be at least 2, got {}", self.num_tasks));
        check(self.d >= 1, "d", format!("must be at least 1, got {}", self.d));
        check(
            self.groups >= 2 && self.groups <= self.num_tasks.max(2),
            "groups",
            format!("must lie in [2, K], got {}", self.groups),
        );
        check(
            self.tau_star > 0.0 && self.tau_star < 1.0,
            "tau_star",
            format!("must lie in (0, 1), got {}", self.tau_star),
        );
        let tau_ok = self.tau_star > 0.0 && self.tau_star < 1.0;
        check(
            self.gamma > 0.0 && self.gamma < if tau_ok { 1.0 - self.tau_star } else { 1.0 },
            "gamma",
            format!("must lie in (0, 1 - tau_star), got {}", self.gamma),
        );
        check(self.sigma >= 0.0, "sigma", format!("must be non-negative, got {}", self.sigma));
        check(self.m0 > 0.0, "m0", format!("must be positive, got {}", self.m0));
        check(
            (0.0..90.0).contains(&self.jitter_deg),
            "jitter_deg",
            format!("must lie in [0, 90), got {}", self.jitter_deg),
        );
        check((0.0..1.0).contains(&self.beta), "beta", format!("must lie in [0, 1), got {}", self.beta));
        check(self.refresh_period >= 1, "R", format!("must be at least 1, got {}", self.refresh_period));
        check(self.f_min >= 1, "f_min", format!("must be at least 1, got {}", self.f_min));
        check(self.steps >= 1, "steps", format!("must be at least 1, got {}", self.steps));
        check(self.eta > 0.0, "eta", format!("must be positive, got {}", self.eta));
        check(
            matches!(self.eta_rule.as_str(), "constant" | "inv_sqrt_t"),
            "eta_rule",
            format!("must be constant or inv_sqrt_t, got {:?}", self.eta_rule),
        );
        if let Err(e) = SketchMode::from_str(&self.sketch_mode) {
            check(false, "sketch_mode", e.to_string());
        }
        if let Err(e) = CombinatorMode::from_str(&self.combinator) {
            check(false, "combinator", e);
        }
        check(self.repeats >= 1, "repeats", format!("must be at least 1, got {}", self.repeats));
        check(
            !self.bench_k.is_empty() && self.bench_k.iter().all(|&k| k >= 2),
            "bench_K",
            "must be a nonempty list of values ≥ 2".into(),
        );
        check(
            !self.bench_r.is_empty() && self.bench_r.iter().all(|&r| r >= 1),
            "bench_R",
            "must be a nonempty list of values ≥ 1".into(),
        );
        check(self.bench_d >= 1, "bench_d", format!("must be at least 1, got {}", self.bench_d));
        check(self.trials >= 1, "trials", format!("must be at least 1, got {}", self.trials));
        check(self.delta > 0.0 && self.delta < 1.0, "delta", format!("must lie in (0, 1), got {}", self.delta));
        if out.is_empty() {
            if let Err(e) = self.scheduler_config().validate() {
                let field = match &e {
                    crate::scheduler::SchedulerError::InvalidConfig { field, .. } => field.to_string(),
                    _ => "scheduler".into(),
                };
                out.push(Diagnostic {
                    field,
                    line: None,
                    msg: e.to_string(),
                });
            }
        }
        out
    }

    /// Scheduler settings. Call on a validated config; unparseable mode
    /// names fall back to their defaults.
    pub fn scheduler_config(&self) -> SchedulerConfig {
        let step_size = match self.eta_rule.as_str() {
            "inv_sqrt_t" => StepSize::InvSqrtT(self.eta),
            _ => StepSize::Constant(self.eta),
        };
        SchedulerConfig {
            tau_star: self.tau_star,
            warmup: self.warmup,
            anneal: AnnealCurve {
                horizon: (self.anneal_horizon > 0).then_some(self.anneal_horizon),
                ..AnnealCurve::default()
            },
            refresh_period: self.refresh_period,
            beta: self.beta,
            f_min: self.f_min,
            step_size,
            total_steps: self.steps,
            seed: self.seed,
            permute_classes: self.permute_classes,
            freeze_schedule: self.freeze_schedule,
            sketch: SketchConfig {
                mode: self.sketch_mode.parse().unwrap_or(SketchMode::Dense),
                jl_dim: self.jl_dim,
                fd_rows: self.fd_rows,
                epsilon: self.epsilon,
                pair_budget: usize::try_from(self.pair_budget).unwrap_or(usize::MAX),
                gamma: self.gamma,
                change_threshold: self.change_threshold,
                ..SketchConfig::default()
            },
            combinator: CombinatorConfig::with_mode(self.combinator.parse().unwrap_or(CombinatorMode::None)),
            ..SchedulerConfig::default()
        }
    }

    /// Planted suite at the target threshold.
    pub fn planted_spec(&self) -> PlantedSpec {
        PlantedSpec {
            num_tasks: self.num_tasks,
            dim: self.d,
            groups: self.groups,
            tau: self.tau_star,
            gamma: self.gamma,
            sigma: self.sigma,
            m0: self.m0,
            jitter_deg: self.jitter_deg,
            seed: self.seed,
        }
    }

    /// Echo of every key as a JSON object.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

fn key_list() -> String {
    KEYS.iter().map(|(k, _, _)| *k).collect::<Vec<_>>().join(", ")
}

/// Help text listing keys, types and defaults.
pub fn describe_keys() -> String {
    let d = Config::default();
    KEYS.iter()
        .map(|&(k, t, help)| format!("  {k}:{} = {}  ({help})", t.name(), d.get(k).expect("known key")))
        .collect::<Vec<_>>()
        .join("\n")
}

//! Cheaper routes to the conflict graph: random projection, Frequent
//! Directions, sampled pair evaluation with refinement, and incremental Gram
//! maintenance. Each mode ends in the same thresholding step as the dense
//! path so their outputs can be compared edge for edge.

mod cost;
mod edge_sample;
mod fd;
mod incremental;
mod jl;

pub use cost::CostCounter;
pub use edge_sample::{edge_sample_graph, EdgeSampleOutcome, EdgeSampleParams};
pub use fd::{cosine_error_bound, FrequentDirections};
pub use incremental::{incremental_gram, GramCache};
pub use jl::{jl_dim_for, jl_project, JlProjection};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict_graph::{build_graph, ConflictGraph, GraphError};
use crate::grad_stats::{GradStats, GradStatsError, InterferenceMatrix};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("JL target dimension {r} exceeds input dimension {d}")]
    TargetTooLarge { r: usize, d: usize },
    #[error("sketch dimension must be at least {min}, got {got}")]
    SketchTooSmall { min: usize, got: usize },
    #[error("row has dimension {got}, sketch expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("pair budget {budget} is below the task count {num_tasks}")]
    BudgetTooSmall { budget: usize, num_tasks: usize },
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("change threshold must be nonnegative, got {0}")]
    InvalidChangeThreshold(f64),
    #[error(transparent)]
    Stats(#[from] GradStatsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchMode {
    Dense,
    Jl,
    Fd,
    EdgeSample,
    Incremental,
}

impl SketchMode {
    pub const ALL: [SketchMode; 5] = [
        SketchMode::Dense,
        SketchMode::Jl,
        SketchMode::Fd,
        SketchMode::EdgeSample,
        SketchMode::Incremental,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SketchMode::Dense => "dense",
            SketchMode::Jl => "jl",
            SketchMode::Fd => "fd",
            SketchMode::EdgeSample => "edge_sample",
            SketchMode::Incremental => "incremental",
        }
    }
}

impl std::str::FromStr for SketchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SketchMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown sketch mode {s:?} (expected one of dense, jl, fd, edge_sample, incremental)"))
    }
}

/// Parameters for every sketch mode; only the fields of the active mode are
/// read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchConfig {
    pub mode: SketchMode,
    /// JL target dimension `r`.
    pub jl_dim: usize,
    /// Frequent Directions sketch rows `ℓ`.
    pub fd_rows: usize,
    /// Accuracy target used to derive default sketch sizes.
    pub epsilon: f64,
    /// Maximum exact pair evaluations for edge sampling.
    pub pair_budget: usize,
    /// Margin band around the threshold that triggers refinement.
    pub gamma: f64,
    /// Relative row drift that marks a row as changed for the incremental
    /// Gram path.
    pub change_threshold: f64,
    /// Incremental refreshes between forced full rebuilds.
    pub rebuild_every: usize,
}

impl Default for SketchConfig {
    fn default() -> Self {
        Self {
            mode: SketchMode::Dense,
            jl_dim: 64,
            fd_rows: 16,
            epsilon: 0.15,
            pair_budget: usize::MAX,
            gamma: 0.3,
            change_threshold: 0.05,
            rebuild_every: 16,
        }
    }
}

impl SketchConfig {
    pub fn dense() -> Self {
        Self::default()
    }

    pub fn with_mode(mode: SketchMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SketchError> {
        if self.jl_dim < 1 {
            return Err(SketchError::SketchTooSmall { min: 1, got: self.jl_dim });
        }
        if self.fd_rows < 2 {
            return Err(SketchError::SketchTooSmall { min: 2, got: self.fd_rows });
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(SketchError::InvalidEpsilon(self.epsilon));
        }
        if !(self.change_threshold >= 0.0) {
            return Err(SketchError::InvalidChangeThreshold(self.change_threshold));
        }
        Ok(())
    }
}

/// Result of one sketched graph build.
#[derive(Clone, Debug)]
pub struct SketchGraph {
    pub graph: ConflictGraph,
    /// Pairs whose edge decision could not be certified within budget
    /// (edge sampling only).
    pub uncertified: Vec<(usize, usize)>,
    /// Certified cosine error bound (Frequent Directions only).
    pub cosine_error_bound: Option<f64>,
    /// True when the incremental path fell back to a full rebuild.
    pub full_rebuild: bool,
}

/// Stateful front end used by the scheduler at each refresh.
#[derive(Clone, Debug)]
pub struct SketchEngine {
    cfg: SketchConfig,
    seed: u64,
    refreshes: u64,
    cache: Option<GramCache>,
    since_rebuild: usize,
    cost: CostCounter,
}

impl SketchEngine {
    pub fn new(cfg: SketchConfig, seed: u64) -> Result<Self, SketchError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            seed,
            refreshes: 0,
            cache: None,
            since_rebuild: 0,
            cost: CostCounter::default(),
        })
    }

    pub fn config(&self) -> &SketchConfig {
        &self.cfg
    }

    /// Cumulative operation counts over every build so far.
    pub fn cost(&self) -> CostCounter {
        self.cost
    }

    /// Builds the conflict graph for the current EMA state. A degenerate
    /// matrix (fewer than two tasks above the norm floor) is reported as
    /// [`GradStatsError::DegenerateMatrix`].
    pub fn conflict_graph(&mut self, stats: &GradStats, tau: f64) -> Result<SketchGraph, SketchError> {
        let round = self.refreshes;
        self.refreshes += 1;
        let m = stats.ema_matrix();
        let mask = stats.included_mask();
        let (k, d) = (m.rows(), m.cols());
        let mut out = SketchGraph {
            graph: ConflictGraph::empty(k),
            uncertified: Vec::new(),
            cosine_error_bound: None,
            full_rebuild: false,
        };
        match self.cfg.mode {
            SketchMode::Dense => {
                self.cost.add_gram(k, d);
                out.graph = build_graph(&stats.interference_matrix()?, tau)?;
            }
            SketchMode::Jl => {
                let r = self.cfg.jl_dim.min(d);
                let seed = self.seed ^ round.wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let proj = JlProjection::gaussian(d, r, seed)?;
                let sketched = proj.project(m);
                self.cost.add_flops((k * d * r) as u64);
                self.cost.add_gram(k, r);
                let rho = InterferenceMatrix::from_gram(&sketched.gram(), mask)?;
                out.graph = build_graph(&rho, tau)?;
            }
            SketchMode::Fd => {
                let n_inc = mask.iter().filter(|&&b| b).count();
                if n_inc < 2 {
                    return Err(GradStatsError::DegenerateMatrix { included: n_inc }.into());
                }
                let mut fd = FrequentDirections::new(self.cfg.fd_rows, d)?;
                for i in (0..k).filter(|&i| mask[i]) {
                    fd.insert(m.row(i))?;
                }
                let coords = fd.project(m);
                self.cost.add_flops(fd.flops() + (k * d * coords.cols()) as u64);
                self.cost.add_gram(k, coords.cols());
                let gram = coords.gram();
                let min_norm = (0..k)
                    .filter(|&i| mask[i])
                    .map(|i| dot(m.row(i), m.row(i)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                out.cosine_error_bound = Some(cosine_error_bound(fd.error_bound(), min_norm));
                let rho = InterferenceMatrix::from_gram(&gram, mask)?;
                out.graph = build_graph(&rho, tau)?;
            }
            SketchMode::EdgeSample => {
                let n_inc = mask.iter().filter(|&&b| b).count();
                if n_inc < 2 {
                    return Err(GradStatsError::DegenerateMatrix { included: n_inc }.into());
                }
                let norms: Vec<f64> = m.iter_rows().map(|r| dot(r, r).sqrt()).collect();
                self.cost.add_flops((k * d) as u64);
                let params = EdgeSampleParams {
                    tau,
                    gamma: self.cfg.gamma,
                    budget: self.cfg.pair_budget.max(k),
                    seed: self.seed ^ round.wrapping_mul(0xD1B5_4A32_D192_ED03),
                    sample_factor: EdgeSampleParams::DEFAULT_SAMPLE_FACTOR,
                };
                let res = edge_sample_graph(
                    k,
                    &mask,
                    |i, j| -dot(m.row(i), m.row(j)) / (norms[i] * norms[j]),
                    &params,
                )?;
                self.cost.add_flops((res.evaluated * d) as u64);
                out.graph = res.graph;
                out.uncertified = res.uncertified;
            }
            SketchMode::Incremental => {
                let versions = stats.row_versions();
                let rebuild = self.since_rebuild >= self.cfg.rebuild_every;
                let cache = match self.cache.take() {
                    Some(c) if !rebuild => {
                        let changed = c.changed_rows(m, self.cfg.change_threshold);
                        let next = incremental_gram(&c, m, versions, &changed);
                        if next.was_rebuilt() {
                            self.since_rebuild = 0;
                            out.full_rebuild = true;
                        } else {
                            self.since_rebuild += 1;
                        }
                        next
                    }
                    _ => {
                        self.since_rebuild = 0;
                        out.full_rebuild = true;
                        GramCache::build(m, versions)
                    }
                };
                self.cost.add_flops(cache.last_flops());
                let rho = InterferenceMatrix::from_gram(cache.gram(), mask)?;
                out.graph = build_graph(&rho, tau)?;
                self.cache = Some(cache);
            }
        }
        Ok(out)
    }
}

/// Dense Gram of a matrix, used as the reference route by the sketch tests.
pub fn dense_gram(m: &Matrix) -> Matrix {
    m.gram()
}

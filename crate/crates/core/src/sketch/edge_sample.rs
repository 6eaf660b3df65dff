use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SketchError;
use crate::conflict_graph::{ConflictGraph, GraphError};

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSampleParams {
    pub tau: f64,
    /// Half-width of the band around `τ` in which a sampled value is treated
    /// as ambiguous.
    pub gamma: f64,
    /// Maximum number of exact pair evaluations.
    pub budget: usize,
    pub seed: u64,
    /// First pass draws `⌈factor · n ln n⌉` pairs.
    pub sample_factor: f64,
}

impl EdgeSampleParams {
    pub const DEFAULT_SAMPLE_FACTOR: f64 = 2.0;

    pub fn new(tau: f64, gamma: f64, budget: usize, seed: u64) -> Self {
        Self {
            tau,
            gamma,
            budget,
            seed,
            sample_factor: Self::DEFAULT_SAMPLE_FACTOR,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EdgeSampleOutcome {
    pub graph: ConflictGraph,
    /// Exact evaluations performed in total.
    pub evaluated: usize,
    /// Evaluations spent after the first pass.
    pub refined: usize,
    /// Pairs whose decision is a guess because the budget ran out.
    pub uncertified: Vec<(usize, usize)>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

#[derive(Default, Clone, Copy)]
struct BlockEvidence {
    conflict: usize,
    near: usize,
}

/// Per cluster-pair verdict for unevaluated pairs.
#[derive(Clone, Copy, PartialEq)]
enum Verdict {
    NoEdge,
    Edge,
    /// Evidence is ambiguous; every pair in the block must be evaluated.
    Exhaustive,
    /// No evaluated pair crosses the block yet; one probe is needed.
    Probe,
}

/// Builds the conflict graph from as few exact `ρ` evaluations as possible.
///
/// A first pass evaluates `O(n log n)` random pairs among the `n` included
/// tasks. Clearly compatible pairs (`ρ ≤ τ − γ`) merge tasks into clusters;
/// unevaluated pairs inside a cluster are inferred compatible and pairs
/// across two clusters with clear-conflict evidence (`ρ ≥ τ + γ`) are
/// inferred as edges. Refinement evaluates every pair of a block that shows
/// a near-threshold value or a within-cluster conflict, and one probe pair
/// for blocks with no evidence. Evaluated pairs always use the exact rule
/// `ρ > τ`.
pub fn edge_sample_graph<F>(
    num_tasks: usize,
    included: &[bool],
    mut rho: F,
    p: &EdgeSampleParams,
) -> Result<EdgeSampleOutcome, SketchError>
where
    F: FnMut(usize, usize) -> f64,
{
    if !(p.tau > 0.0 && p.tau <= 1.0) {
        return Err(GraphError::InvalidTau(p.tau).into());
    }
    if p.budget < num_tasks {
        return Err(SketchError::BudgetTooSmall {
            budget: p.budget,
            num_tasks,
        });
    }
    let idx: Vec<usize> = (0..num_tasks).filter(|&i| included[i]).collect();
    let n = idx.len();
    let total = n * n.saturating_sub(1) / 2;
    let mut values: Vec<Option<f64>> = vec![None; n * n];
    let mut evaluated = 0usize;
    let mut budget_left = p.budget;
    let mut eval = |a: usize, b: usize, values: &mut Vec<Option<f64>>| {
        let v = rho(idx[a], idx[b]);
        values[a * n + b] = Some(v);
        values[b * n + a] = Some(v);
    };

    let wanted = if n < 2 {
        0
    } else {
        let nf = n as f64;
        ((p.sample_factor * nf * nf.ln()).ceil() as usize).max(n)
    };
    let first = wanted.min(total).min(budget_left);
    let all_pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .collect();
    if first == total {
        for &(a, b) in &all_pairs {
            eval(a, b, &mut values);
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let mut picks: Vec<usize> = rand::seq::index::sample(&mut rng, total, first).into_vec();
        picks.sort_unstable();
        for i in picks {
            let (a, b) = all_pairs[i];
            eval(a, b, &mut values);
        }
    }
    evaluated += first;
    budget_left -= first;
    let mut refined = 0usize;

    let lo = p.tau - p.gamma;
    let hi = p.tau + p.gamma;
    loop {
        let mut uf = UnionFind((0..n).collect());
        for &(a, b) in &all_pairs {
            if matches!(values[a * n + b], Some(v) if v <= lo) {
                uf.union(a, b);
            }
        }
        let cluster: Vec<usize> = (0..n).map(|a| uf.find(a)).collect();
        let mut evidence: BTreeMap<(usize, usize), BlockEvidence> = BTreeMap::new();
        for &(a, b) in &all_pairs {
            let key = ordered(cluster[a], cluster[b]);
            let e = evidence.entry(key).or_default();
            if let Some(v) = values[a * n + b] {
                if v >= hi {
                    e.conflict += 1;
                } else if v > lo {
                    e.near += 1;
                }
            }
        }
        let verdict = |key: (usize, usize)| -> Verdict {
            let e = evidence[&key];
            if e.near > 0 || (key.0 == key.1 && e.conflict > 0) {
                Verdict::Exhaustive
            } else if key.0 == key.1 {
                Verdict::NoEdge
            } else if e.conflict > 0 {
                Verdict::Edge
            } else {
                Verdict::Probe
            }
        };

        let mut pending = Vec::new();
        let mut probed = std::collections::BTreeSet::new();
        for &(a, b) in &all_pairs {
            if values[a * n + b].is_some() {
                continue;
            }
            let key = ordered(cluster[a], cluster[b]);
            match verdict(key) {
                Verdict::Exhaustive => pending.push((a, b)),
                Verdict::Probe => {
                    if probed.insert(key) {
                        pending.push((a, b));
                    }
                }
                _ => {}
            }
        }

        if pending.is_empty() || budget_left == 0 {
            let mut edges = Vec::new();
            let mut uncertified = Vec::new();
            for &(a, b) in &all_pairs {
                let (i, j) = (idx[a], idx[b]);
                match values[a * n + b] {
                    Some(v) => {
                        if v > p.tau {
                            edges.push((i, j, v));
                        }
                    }
                    None => {
                        let key = ordered(cluster[a], cluster[b]);
                        match verdict(key) {
                            Verdict::NoEdge => {}
                            Verdict::Edge => edges.push((i, j, hi)),
                            Verdict::Exhaustive | Verdict::Probe => {
                                uncertified.push((i, j));
                                if key.0 != key.1 && evidence[&key].conflict > 0 {
                                    edges.push((i, j, hi));
                                }
                            }
                        }
                    }
                }
            }
            let graph = ConflictGraph::from_weighted_edges(num_tasks, p.tau, edges)?;
            return Ok(EdgeSampleOutcome {
                graph,
                evaluated,
                refined,
                uncertified,
            });
        }

        let take = pending.len().min(budget_left);
        for &(a, b) in &pending[..take] {
            eval(a, b, &mut values);
        }
        evaluated += take;
        refined += take;
        budget_left -= take;
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

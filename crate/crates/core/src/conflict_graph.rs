//! Thresholded conflict graphs, Welsh-Powell coloring and minimum-coverage
//! augmentation of the resulting color classes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grad_stats::InterferenceMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("threshold tau must lie in (0, 1], got {0}")]
    InvalidTau(f64),
    #[error("edge ({0}, {1}) is a self-loop")]
    SelfLoop(usize, usize),
    #[error("edge ({i}, {j}) references a vertex outside 0..{n}")]
    VertexOutOfRange { i: usize, j: usize, n: usize },
    #[error("edge list parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("coloring covers {got} vertices but the graph has {expected}")]
    ColoringSizeMismatch { expected: usize, got: usize },
    #[error("f_min must be at least 1")]
    InvalidMinCoverage,
}

/// An undirected conflict edge `i < j`, with the interference value that
/// produced it when it came from a threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub rho: Option<f64>,
}

/// Simple undirected graph on tasks `0..n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictGraph {
    n: usize,
    tau: Option<f64>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
}

impl ConflictGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            tau: None,
            edges: Vec::new(),
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from unordered pairs. Duplicate pairs collapse.
    pub fn from_edges<I>(n: usize, pairs: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(n);
        for (i, j) in pairs {
            g.insert(i, j, None)?;
        }
        g.finish();
        Ok(g)
    }

    /// Graph at threshold `tau` from `(i, j, ρ_ij)` triples already known to
    /// exceed it.
    pub fn from_weighted_edges<I>(n: usize, tau: f64, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(GraphError::InvalidTau(tau));
        }
        let mut g = Self::empty(n);
        g.tau = Some(tau);
        for (i, j, rho) in edges {
            g.insert(i, j, Some(rho))?;
        }
        g.finish();
        Ok(g)
    }

    fn insert(&mut self, i: usize, j: usize, rho: Option<f64>) -> Result<(), GraphError> {
        if i >= self.n || j >= self.n {
            return Err(GraphError::VertexOutOfRange { i, j, n: self.n });
        }
        if i == j {
            return Err(GraphError::SelfLoop(i, j));
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        if self.adjacency[a].contains(&b) {
            return Ok(());
        }
        self.adjacency[a].push(b);
        self.adjacency[b].push(a);
        self.edges.push(Edge { i: a, j: b, rho });
        Ok(())
    }

    fn finish(&mut self) {
        for adj in &mut self.adjacency {
            adj.sort_unstable();
        }
        self.edges.sort_by_key(|e| (e.i, e.j));
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.i, e.j)).collect()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && self.adjacency[i].binary_search(&j).is_ok()
    }

    /// Maximum vertex degree Δ; zero for an edgeless graph.
    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// True when the two graphs have identical vertex counts and edge sets.
    pub fn same_edges(&self, other: &ConflictGraph) -> bool {
        self.n == other.n && self.edge_pairs() == other.edge_pairs()
    }

    /// Plain-text edge list: the vertex count on the first line, then one
    /// `i j` pair (0-based) per line.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for e in &self.edges {
            let _ = writeln!(s, "{} {}", e.i, e.j);
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (line, first) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            msg: "missing vertex count".into(),
        })?;
        let n: usize = first.parse().map_err(|_| GraphError::Parse {
            line,
            msg: format!("bad vertex count {first:?}"),
        })?;
        let mut pairs = Vec::new();
        for (line, l) in lines {
            let mut it = l.split_whitespace();
            let mut next = || -> Result<usize, GraphError> {
                let tok = it.next().ok_or(GraphError::Parse {
                    line,
                    msg: "expected two vertex indices".into(),
                })?;
                tok.parse().map_err(|_| GraphError::Parse {
                    line,
                    msg: format!("bad vertex index {tok:?}"),
                })
            };
            let i = next()?;
            let j = next()?;
            if it.next().is_some() {
                return Err(GraphError::Parse {
                    line,
                    msg: "trailing tokens".into(),
                });
            }
            pairs.push((i, j));
        }
        Self::from_edges(n, pairs)
    }
}

/// Thresholds ρ at τ: edge `(i, j)` iff both tasks are included and
/// `ρ_ij > τ` (strictly). Excluded tasks become isolated vertices.
pub fn build_graph(rho: &InterferenceMatrix, tau: f64) -> Result<ConflictGraph, GraphError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(GraphError::InvalidTau(tau));
    }
    let n = rho.num_tasks();
    let mut g = ConflictGraph::empty(n);
    g.tau = Some(tau);
    for i in 0..n {
        for j in (i + 1)..n {
            if let Some(v) = rho.get(i, j) {
                if v > tau {
                    g.insert(i, j, Some(v))?;
                }
            }
        }
    }
    g.finish();
    Ok(g)
}

/// Proper vertex coloring. Colors are 0-based; class `c` lists its vertices
/// in ascending order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coloring {
    color_of: Vec<usize>,
    classes: Vec<Vec<usize>>,
}

impl Coloring {
    /// Builds a coloring from a per-vertex color assignment. Color indices
    /// are compacted to `0..m` preserving their relative order.
    pub fn from_assignment(color_of: Vec<usize>) -> Self {
        let mut used: Vec<usize> = color_of.clone();
        used.sort_unstable();
        used.dedup();
        let color_of: Vec<usize> = color_of
            .iter()
            .map(|c| used.binary_search(c).expect("present"))
            .collect();
        let mut classes = vec![Vec::new(); used.len()];
        for (v, &c) in color_of.iter().enumerate() {
            classes[c].push(v);
        }
        Self { color_of, classes }
    }

    /// Reorders the classes; `order[s]` is the old index of the class placed
    /// in slot `s`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.classes.len());
        let mut color_of = vec![0; self.color_of.len()];
        let classes: Vec<Vec<usize>> = order.iter().map(|&o| self.classes[o].clone()).collect();
        for (slot, class) in classes.iter().enumerate() {
            for &v in class {
                color_of[v] = slot;
            }
        }
        Self { color_of, classes }
    }

    pub fn num_colors(&self) -> usize {
        self.classes.len()
    }

    pub fn color_of(&self, v: usize) -> usize {
        self.color_of[v]
    }

    pub fn colors(&self) -> &[usize] {
        &self.color_of
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn is_proper(&self, g: &ConflictGraph) -> bool {
        self.color_of.len() == g.num_vertices()
            && g.edges().iter().all(|e| self.color_of[e.i] != self.color_of[e.j])
    }
}

/// Welsh-Powell largest-first greedy coloring.
///
/// Vertices are visited in non-increasing degree order, ties broken by
/// ascending index, and each takes the smallest color not used by an
/// already-colored neighbor. Uses at most Δ+1 colors.
pub fn welsh_powell(g: &ConflictGraph) -> Coloring {
    let n = g.num_vertices();
    if n == 0 {
        return Coloring {
            color_of: Vec::new(),
            classes: Vec::new(),
        };
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));

    let mut color: Vec<Option<usize>> = vec![None; n];
    let mut taken = vec![false; g.max_degree() + 2];
    for &v in &order {
        for &u in g.neighbors(v) {
            if let Some(c) = color[u] {
                taken[c] = true;
            }
        }
        let c = taken.iter().position(|t| !t).expect("Δ+1 palette always has a free color");
        color[v] = Some(c);
        for &u in g.neighbors(v) {
            if let Some(c) = color[u] {
                taken[c] = false;
            }
        }
    }
    Coloring::from_assignment(color.into_iter().map(|c| c.expect("all colored")).collect())
}

/// Color classes plus the extra task copies placed by minimum-coverage
/// augmentation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSchedule {
    base_classes: Vec<Vec<usize>>,
    extra_slots: Vec<Vec<usize>>,
    f_min: usize,
    coverage_failures: Vec<usize>,
}

impl AugmentedSchedule {
    /// One slot holding every task: the warm-up and fallback schedule.
    pub fn all_tasks(num_tasks: usize) -> Self {
        Self {
            base_classes: vec![(0..num_tasks).collect()],
            extra_slots: vec![Vec::new()],
            f_min: 1,
            coverage_failures: Vec::new(),
        }
    }

    /// Number of slots `m` in one period.
    pub fn period(&self) -> usize {
        self.base_classes.len()
    }

    pub fn base_classes(&self) -> &[Vec<usize>] {
        &self.base_classes
    }

    pub fn extra_slots(&self) -> &[Vec<usize>] {
        &self.extra_slots
    }

    pub fn f_min(&self) -> usize {
        self.f_min
    }

    /// Tasks that could not reach `f_min` appearances per period.
    pub fn coverage_failures(&self) -> &[usize] {
        &self.coverage_failures
    }

    /// Sorted union of the base class and its duplicated tasks for `slot`.
    pub fn slot(&self, slot: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self.base_classes[slot]
            .iter()
            .chain(&self.extra_slots[slot])
            .copied()
            .collect();
        s.sort_unstable();
        s
    }

    /// Appearances of `task` in one period.
    pub fn appearances(&self, task: usize) -> usize {
        (0..self.period()).filter(|&s| self.slot(s).contains(&task)).count()
    }

    /// True when no slot holds both endpoints of an edge of `g`.
    pub fn respects(&self, g: &ConflictGraph) -> bool {
        (0..self.period()).all(|s| {
            let members = self.slot(s);
            members
                .iter()
                .enumerate()
                .all(|(a, &u)| members[a + 1..].iter().all(|&v| !g.has_edge(u, v)))
        })
    }
}

/// Duplicates under-covered tasks into compatible slots until each appears
/// `f_min` times per period.
///
/// Tasks are handled in ascending index. For each one the slots after its
/// own are scanned in cyclic order; a slot accepts the task only if none of
/// its current members (base class or earlier duplicates) shares a conflict
/// edge with it. Tasks that run out of slots are reported, not rejected.
pub fn enforce_min_coverage(
    coloring: &Coloring,
    g: &ConflictGraph,
    f_min: usize,
) -> Result<AugmentedSchedule, GraphError> {
    if f_min == 0 {
        return Err(GraphError::InvalidMinCoverage);
    }
    if coloring.colors().len() != g.num_vertices() {
        return Err(GraphError::ColoringSizeMismatch {
            expected: g.num_vertices(),
            got: coloring.colors().len(),
        });
    }
    let m = coloring.num_colors();
    let base = coloring.classes().to_vec();
    let mut extra: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut failures = Vec::new();

    for task in 0..g.num_vertices() {
        let home = coloring.color_of(task);
        let mut count = 1;
        let mut offset = 1;
        while count < f_min && offset < m {
            let slot = (home + offset) % m;
            offset += 1;
            let compatible = base[slot]
                .iter()
                .chain(&extra[slot])
                .all(|&u| !g.has_edge(u, task));
            if compatible {
                extra[slot].push(task);
                count += 1;
            }
        }
        if count < f_min {
            failures.push(task);
        }
    }
    Ok(AugmentedSchedule {
        base_classes: base,
        extra_slots: extra,
        f_min,
        coverage_failures: failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad_stats::GradStats;
    use crate::linalg::Matrix;

    fn rho_from(k: usize, pairs: &[((usize, usize), f64)]) -> InterferenceMatrix {
        // Build a gram whose negated cosines equal the given values.
        let mut gram = Matrix::zeros(k, k);
        for i in 0..k {
            gram.set(i, i, 1.0);
        }
        for &((i, j), r) in pairs {
            gram.set(i, j, -r);
            gram.set(j, i, -r);
        }
        InterferenceMatrix::from_gram(&gram, vec![true; k]).unwrap()
    }

    #[test]
    fn strict_threshold() {
        let g = build_graph(&rho_from(2, &[((0, 1), 0.6)]), 0.5).unwrap();
        assert!(g.has_edge(0, 1));
        let g = build_graph(&rho_from(2, &[((0, 1), 0.5)]), 0.5).unwrap();
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn three_task_path() {
        let rho = rho_from(3, &[((0, 1), 0.9), ((1, 2), 0.9), ((0, 2), -0.2)]);
        let g = build_graph(&rho, 0.5).unwrap();
        assert_eq!(g.edge_pairs(), vec![(0, 1), (1, 2)]);
        assert_eq!(g.max_degree(), 2);
        assert_eq!(g.edges()[0].rho, Some(0.9));
    }

    #[test]
    fn invalid_tau_rejected() {
        let rho = rho_from(2, &[]);
        assert_eq!(build_graph(&rho, 0.0), Err(GraphError::InvalidTau(0.0)));
        assert!(build_graph(&rho, 1.5).is_err());
        assert!(build_graph(&rho, 1.0).is_ok());
    }

    #[test]
    fn excluded_are_isolated() {
        let s = GradStats::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![-1.0, 0.0]], 0.5).unwrap();
        let g = build_graph(&s.interference_matrix().unwrap(), 0.5).unwrap();
        assert_eq!(g.edge_pairs(), vec![(0, 2)]);
        assert_eq!(g.degree(1), 0);
    }

    #[test]
    fn coloring_examples() {
        let tri = ConflictGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(welsh_powell(&tri).num_colors(), 3);

        let path = ConflictGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let c = welsh_powell(&path);
        assert_eq!(c.num_colors(), 2);
        assert_eq!(c.classes(), &[vec![1], vec![0, 2]]);

        let empty = ConflictGraph::empty(5);
        let c = welsh_powell(&empty);
        assert_eq!(c.num_colors(), 1);
        assert_eq!(c.classes(), &[vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn tie_break_is_ascending_index() {
        // Two disjoint edges: all degrees equal, so vertex 0 is colored first.
        let g = ConflictGraph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        let c = welsh_powell(&g);
        assert_eq!(c.classes(), &[vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn max_degree_examples() {
        assert_eq!(ConflictGraph::empty(4).max_degree(), 0);
        let tri = ConflictGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(tri.max_degree(), 2);
        let star = ConflictGraph::from_edges(6, (1..6).map(|l| (0, l))).unwrap();
        assert_eq!(star.max_degree(), 5);
    }

    #[test]
    fn coverage_on_empty_graph() {
        let g = ConflictGraph::empty(3);
        let s = enforce_min_coverage(&welsh_powell(&g), &g, 1).unwrap();
        assert_eq!(s.period(), 1);
        assert!(s.extra_slots()[0].is_empty());
        assert!(s.coverage_failures().is_empty());
    }

    #[test]
    fn coverage_on_path_cannot_duplicate() {
        // Every task in a path conflicts with the sole member(s) of the other
        // slot, so no duplicate is legal and all three are reported.
        let g = ConflictGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let s = enforce_min_coverage(&welsh_powell(&g), &g, 2).unwrap();
        assert!(s.extra_slots().iter().all(Vec::is_empty));
        assert_eq!(s.coverage_failures(), &[0, 1, 2]);
        assert!(s.respects(&g));
    }

    #[test]
    fn coverage_duplicates_into_compatible_slot() {
        // 0-1 conflict; 2 is free. Coloring: {0,2}, {1}. Task 2 can join {1}.
        let g = ConflictGraph::from_edges(3, [(0, 1)]).unwrap();
        let c = welsh_powell(&g);
        assert_eq!(c.classes(), &[vec![0, 2], vec![1]]);
        let s = enforce_min_coverage(&c, &g, 2).unwrap();
        assert_eq!(s.extra_slots(), &[vec![], vec![2]]);
        assert_eq!(s.coverage_failures(), &[0, 1]);
        assert_eq!(s.slot(1), vec![1, 2]);
        assert_eq!(s.appearances(2), 2);
        assert!(s.respects(&g));
    }

    #[test]
    fn coverage_on_star_with_two_colors_fails() {
        let g = ConflictGraph::from_edges(4, (1..4).map(|l| (0, l))).unwrap();
        let c = welsh_powell(&g);
        assert_eq!(c.num_colors(), 2);
        let s = enforce_min_coverage(&c, &g, 2).unwrap();
        assert_eq!(s.coverage_failures(), &[0, 1, 2, 3]);
    }

    #[test]
    fn coverage_rejects_zero_fmin() {
        let g = ConflictGraph::empty(2);
        assert_eq!(
            enforce_min_coverage(&welsh_powell(&g), &g, 0),
            Err(GraphError::InvalidMinCoverage)
        );
    }

    #[test]
    fn edge_list_roundtrip_and_errors() {
        let g = ConflictGraph::from_edges(4, [(2, 0), (1, 3)]).unwrap();
        let text = g.to_edge_list();
        assert_eq!(text, "4\n0 2\n1 3\n");
        assert!(ConflictGraph::from_edge_list(&text).unwrap().same_edges(&g));
        assert!(matches!(
            ConflictGraph::from_edge_list("3\n0 0\n"),
            Err(GraphError::SelfLoop(0, 0))
        ));
        assert!(matches!(
            ConflictGraph::from_edge_list("3\n0 5\n"),
            Err(GraphError::VertexOutOfRange { .. })
        ));
        assert!(matches!(
            ConflictGraph::from_edge_list("x\n"),
            Err(GraphError::Parse { line: 1, .. })
        ));
    }
}

//! Reference implementations used by the integration tests. Each one is
//! written from the definitions with plain loops and shares no code with
//! the library.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;

pub type EdgeSet = BTreeSet<(usize, usize)>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

/// Edges `(i, j)`, `i < j`, with `−cos > τ` among rows whose norm reaches
/// `floor`.
pub fn dense_graph(rows: &[Vec<f64>], tau: f64, floor: f64) -> EdgeSet {
    let ok: Vec<bool> = rows.iter().map(|r| dot(r, r).sqrt() >= floor).collect();
    let mut out = EdgeSet::new();
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            if ok[i] && ok[j] && -cosine(&rows[i], &rows[j]) > tau {
                out.insert((i, j));
            }
        }
    }
    out
}

pub fn edge_set(pairs: impl IntoIterator<Item = (usize, usize)>) -> EdgeSet {
    pairs.into_iter().map(|(i, j)| (i.min(j), i.max(j))).collect()
}

pub fn max_degree(n: usize, edges: &EdgeSet) -> usize {
    let mut deg = vec![0; n];
    for &(i, j) in edges {
        deg[i] += 1;
        deg[j] += 1;
    }
    deg.into_iter().max().unwrap_or(0)
}

/// Exact chromatic number by trying `k = 1, 2, …` with backtracking.
pub fn chromatic_number(n: usize, edges: &EdgeSet) -> usize {
    if n == 0 {
        return 0;
    }
    let mut adj = vec![vec![false; n]; n];
    for &(i, j) in edges {
        adj[i][j] = true;
        adj[j][i] = true;
    }
    fn fits(v: usize, k: usize, colors: &mut Vec<usize>, adj: &[Vec<bool>]) -> bool {
        if v == colors.len() {
            return true;
        }
        for c in 0..k {
            if (0..v).all(|u| !adj[v][u] || colors[u] != c) {
                colors[v] = c;
                if fits(v + 1, k, colors, adj) {
                    return true;
                }
            }
        }
        false
    }
    (1..=n)
        .find(|&k| fits(0, k, &mut vec![usize::MAX; n], &adj))
        .expect("n colors always suffice")
}

/// Erdős–Rényi graph `G(n, p)`.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, p: f64) -> EdgeSet {
    let mut out = EdgeSet::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                out.insert((i, j));
            }
        }
    }
    out
}

/// Complete multipartite graph on consecutive parts of the given sizes.
pub fn complete_multipartite(sizes: &[usize]) -> (usize, Vec<Vec<usize>>, EdgeSet) {
    let mut parts = Vec::new();
    let mut next = 0;
    for &s in sizes {
        parts.push((next..next + s).collect::<Vec<_>>());
        next += s;
    }
    let mut edges = EdgeSet::new();
    for a in 0..parts.len() {
        for b in (a + 1)..parts.len() {
            for &i in &parts[a] {
                for &j in &parts[b] {
                    edges.insert((i.min(j), i.max(j)));
                }
            }
        }
    }
    (next, parts, edges)
}

/// `1 / Σ w_s²` with the normalized EMA weights
/// `w_s = (1−β) β^{R−s} / (1 − β^R)`, `s = 1..R`.
pub fn neff_by_weights(beta: f64, r: u64) -> f64 {
    let norm = 1.0 - beta.powi(r as i32);
    let mut sq = 0.0;
    for s in 1..=r {
        let w = (1.0 - beta) * beta.powi((r - s) as i32) / norm;
        sq += w * w;
    }
    1.0 / sq
}

/// Runs `periods` full cycles of the slot sequence and reports, per task,
/// the largest number of consecutive steps without an update (counting the
/// lead-in before the first appearance).
pub fn cyclic_gaps(num_tasks: usize, slots: &[Vec<usize>], periods: usize) -> Vec<usize> {
    let mut last: Vec<Option<usize>> = vec![None; num_tasks];
    let mut worst = vec![0; num_tasks];
    let steps = periods * slots.len();
    for t in 0..steps {
        for &k in &slots[t % slots.len()] {
            let gap = match last[k] {
                Some(l) => t - l - 1,
                None => t,
            };
            worst[k] = worst[k].max(gap);
            last[k] = Some(t);
        }
    }
    for k in 0..num_tasks {
        let tail = match last[k] {
            Some(l) => steps - l - 1,
            None => steps,
        };
        worst[k] = worst[k].max(tail);
    }
    worst
}

pub fn gaussian_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// `Σ_{i≠j} max(0, −⟨g_i, g_j⟩) / Σ‖g_k‖²` over ordered pairs.
pub fn tau_eff(gs: &[Vec<f64>]) -> f64 {
    let mut neg = 0.0;
    let mut sq = 0.0;
    for i in 0..gs.len() {
        sq += dot(&gs[i], &gs[i]);
        for j in 0..gs.len() {
            if i != j {
                neg += (-dot(&gs[i], &gs[j])).max(0.0);
            }
        }
    }
    if sq == 0.0 {
        0.0
    } else {
        neg / sq
    }
}

pub fn sum_norm_sq(gs: &[Vec<f64>]) -> (f64, f64) {
    let d = gs.first().map_or(0, Vec::len);
    let mut total = vec![0.0; d];
    for g in gs {
        for i in 0..d {
            total[i] += g[i];
        }
    }
    (dot(&total, &total), gs.iter().map(|g| dot(g, g)).sum())
}

pub fn pairwise_compatible(gs: &[Vec<f64>], tau: f64) -> bool {
    for i in 0..gs.len() {
        for j in (i + 1)..gs.len() {
            if cosine(&gs[i], &gs[j]) < -tau {
                return false;
            }
        }
    }
    true
}

/// Rejection-samples a pairwise τ-compatible set. Vectors share a random
/// common direction with random strength so that sets near the boundary are
/// drawn as well as easy ones.
pub fn compatible_set<R: Rng>(rng: &mut R, tau: f64, size: usize, d: usize) -> Vec<Vec<f64>> {
    loop {
        let common = gaussian_vec(rng, d);
        let pull = rng.random::<f64>() * 2.0;
        let set: Vec<Vec<f64>> = (0..size)
            .map(|_| {
                let scale = 0.1 + rng.random::<f64>() * 3.0;
                gaussian_vec(rng, d)
                    .iter()
                    .zip(&common)
                    .map(|(x, c)| scale * (x + pull * c))
                    .collect()
            })
            .collect();
        if pairwise_compatible(&set, tau) {
            return set;
        }
    }
}

/// Arbitrary sets: Gaussian, antipodal pairs, or a vector with many
/// near-opposite copies.
pub fn adversarial_set<R: Rng>(rng: &mut R, size: usize, d: usize) -> Vec<Vec<f64>> {
    match rng.random_range(0..3) {
        0 => (0..size).map(|_| gaussian_vec(rng, d)).collect(),
        1 => {
            let v = gaussian_vec(rng, d);
            (0..size)
                .map(|k| {
                    let s = if k % 2 == 0 { 1.0 } else { -1.0 } * (0.5 + rng.random::<f64>());
                    v.iter().map(|x| s * x).collect()
                })
                .collect()
        }
        _ => {
            let v = gaussian_vec(rng, d);
            let mut out = vec![v.clone()];
            for _ in 1..size {
                let noise = gaussian_vec(rng, d);
                out.push(v.iter().zip(&noise).map(|(x, n)| -x + 0.05 * n).collect());
            }
            out
        }
    }
}

/// Quadratic loss `½ (θ−c)ᵀ H (θ−c)` evaluated with plain loops.
pub fn quad_loss(h: &[Vec<f64>], c: &[f64], theta: &[f64]) -> f64 {
    let d = theta.len();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += (theta[i] - c[i]) * h[i][j] * (theta[j] - c[j]);
        }
    }
    0.5 * s
}

pub fn quad_grad(h: &[Vec<f64>], c: &[f64], theta: &[f64]) -> Vec<f64> {
    let d = theta.len();
    (0..d).map(|i| (0..d).map(|j| h[i][j] * (theta[j] - c[j])).sum()).collect()
}

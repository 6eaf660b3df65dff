use crate::linalg::{dot, Matrix};

/// Cached Gram matrix of the EMA rows, together with the row snapshot and
/// row versions it was computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct GramCache {
    gram: Matrix,
    row_norms: Vec<f64>,
    snapshot: Matrix,
    row_version: Vec<u64>,
    last_flops: u64,
    rebuilt: bool,
}

impl GramCache {
    /// Full `O(K²d)` build.
    pub fn build(m: &Matrix, versions: &[u64]) -> Self {
        let gram = m.gram();
        let k = m.rows();
        let row_norms = (0..k).map(|i| gram.get(i, i).sqrt()).collect();
        let mut row_version = versions.to_vec();
        row_version.resize(k, 0);
        Self {
            gram,
            row_norms,
            snapshot: m.clone(),
            row_version,
            last_flops: (k * (k + 1) / 2 * m.cols()) as u64,
            rebuilt: true,
        }
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn row_norms(&self) -> &[f64] {
        &self.row_norms
    }

    pub fn row_versions(&self) -> &[u64] {
        &self.row_version
    }

    pub fn snapshot(&self) -> &Matrix {
        &self.snapshot
    }

    /// Flops spent by the operation that produced this cache.
    pub fn last_flops(&self) -> u64 {
        self.last_flops
    }

    /// True when this cache came from a full build rather than a row update.
    pub fn was_rebuilt(&self) -> bool {
        self.rebuilt
    }

    /// Rows whose relative drift `‖m_i − snapshot_i‖ / ‖snapshot_i‖` exceeds
    /// `threshold`. A zero snapshot row counts as changed once the current
    /// row is nonzero. A shape change marks every row.
    pub fn changed_rows(&self, m: &Matrix, threshold: f64) -> Vec<usize> {
        if m.rows() != self.snapshot.rows() || m.cols() != self.snapshot.cols() {
            return (0..m.rows()).collect();
        }
        (0..m.rows())
            .filter(|&i| {
                let (cur, old) = (m.row(i), self.snapshot.row(i));
                let mut diff = 0.0;
                for (a, b) in cur.iter().zip(old) {
                    diff += (a - b) * (a - b);
                }
                let base = self.row_norms[i];
                if base == 0.0 {
                    diff > 0.0
                } else {
                    diff.sqrt() / base > threshold
                }
            })
            .collect()
    }
}

/// Recomputes the rows and columns of `changed` against the current matrix
/// `m` (`O(sKd)`); every other entry is copied unchanged. Falls back to a
/// full rebuild when the cache does not match `m` (shape, out-of-range row,
/// or a cached version newer than `versions`).
pub fn incremental_gram(cache: &GramCache, m: &Matrix, versions: &[u64], changed: &[usize]) -> GramCache {
    let k = m.rows();
    let stale = cache.snapshot.rows() != k
        || cache.snapshot.cols() != m.cols()
        || versions.len() != k
        || cache.row_version.iter().zip(versions).any(|(c, v)| c > v)
        || changed.iter().any(|&i| i >= k);
    if stale {
        return GramCache::build(m, versions);
    }
    let mut next = cache.clone();
    next.rebuilt = false;
    let mut rows: Vec<usize> = changed.to_vec();
    rows.sort_unstable();
    rows.dedup();
    for &i in &rows {
        next.snapshot.row_mut(i).copy_from_slice(m.row(i));
        next.row_version[i] = versions[i];
    }
    for &i in &rows {
        for j in 0..k {
            let v = dot(next.snapshot.row(i), next.snapshot.row(j));
            next.gram.set(i, j, v);
            next.gram.set(j, i, v);
        }
        next.row_norms[i] = next.gram.get(i, i).sqrt();
    }
    next.last_flops = (rows.len() * k * m.cols()) as u64;
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Matrix {
        Matrix::from_rows(&(0..8).map(|i| (0..5).map(|j| ((i * 7 + j * 3) % 11) as f64 - 5.0).collect::<Vec<_>>()).collect::<Vec<_>>())
            .unwrap()
    }

    #[test]
    fn no_changes_keeps_cache() {
        let m = sample();
        let c = GramCache::build(&m, &[0; 8]);
        let next = incremental_gram(&c, &m, &[0; 8], &[]);
        assert_eq!(next.gram(), c.gram());
        assert!(!next.was_rebuilt());
        assert_eq!(next.last_flops(), 0);
    }

    #[test]
    fn one_row_change_matches_rebuild() {
        let mut m = sample();
        let c = GramCache::build(&m, &[0; 8]);
        m.row_mut(3).copy_from_slice(&[0.5, -1.0, 2.0, 0.0, 4.0]);
        let mut versions = [0; 8];
        versions[3] = 1;
        let changed = c.changed_rows(&m, 0.05);
        assert_eq!(changed, vec![3]);
        let next = incremental_gram(&c, &m, &versions, &changed);
        let dense = m.gram();
        for i in 0..8 {
            for j in 0..8 {
                assert!((next.gram().get(i, j) - dense.get(i, j)).abs() < 1e-12);
            }
        }
        assert_eq!(next.last_flops(), 8 * 5);
    }

    #[test]
    fn version_regression_forces_rebuild() {
        let m = sample();
        let c = GramCache::build(&m, &[2; 8]);
        let next = incremental_gram(&c, &m, &[1; 8], &[]);
        assert!(next.was_rebuilt());
    }
}

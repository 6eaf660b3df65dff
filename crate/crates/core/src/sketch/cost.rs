use serde::{Deserialize, Serialize};

/// Multiply-add and memory traffic counters. One multiply-add counts as one
/// flop; bytes count `f64` reads of the input rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounter {
    pub flops: u64,
    pub bytes: u64,
}

impl CostCounter {
    pub fn add_flops(&mut self, n: u64) {
        self.flops += n;
        self.bytes += 8 * n;
    }

    /// Cost of the upper triangle of a `k × k` Gram over `dim`-vectors.
    pub fn add_gram(&mut self, k: usize, dim: usize) {
        self.add_flops((k * (k + 1) / 2 * dim) as u64);
    }

    pub fn merge(&mut self, other: CostCounter) {
        self.flops += other.flops;
        self.bytes += other.bytes;
    }
}

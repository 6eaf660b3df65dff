//! Per-step run log and its CSV / JSON renderings.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::optim::CombinatorMode;
use crate::scheduler::SchedulerConfig;
use crate::sketch::CostCounter;

pub const RUN_CSV_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub tau: f64,
    /// Period of the schedule in force.
    pub m: usize,
    pub active: Vec<usize>,
    /// Sum of the active tasks' losses.
    pub loss: f64,
    /// Norm of the summed active gradients, before any combinator.
    pub grad_norm: f64,
    /// A refresh ran at the end of this step.
    pub refresh: bool,
    /// Index into [`RunRecord::windows`].
    pub window: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub start: usize,
    pub tau: f64,
    /// Conflict edges of the graph built at this refresh.
    pub edges: Vec<(usize, usize)>,
    pub max_degree: usize,
    /// Base color classes in execution order.
    pub classes: Vec<Vec<usize>>,
    /// Full active set of each slot (base class plus duplicates).
    pub slots: Vec<Vec<usize>>,
    pub coverage_failures: Vec<usize>,
    /// The interference matrix was degenerate and all tasks run together.
    pub fallback: bool,
    /// The schedule was carried over from an earlier window.
    pub frozen: bool,
    /// Edge decisions the sketch could not certify.
    pub uncertified: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: SchedulerConfig,
    pub num_tasks: usize,
    pub combinator: CombinatorMode,
    pub steps: Vec<StepRecord>,
    pub windows: Vec<WindowRecord>,
    pub sketch_cost: CostCounter,
    /// Steps whose active gradients broke the assumption-free descent bound.
    pub descent_violations: usize,
    pub final_theta: Vec<f64>,
}

/// Hex bitmask with task 0 as the least significant bit.
pub fn mask_hex(active: &[usize], num_tasks: usize) -> String {
    let nibbles = num_tasks.div_ceil(4).max(1);
    let mut bits = vec![0u8; nibbles];
    for &k in active {
        bits[k / 4] |= 1 << (k % 4);
    }
    bits.iter().rev().map(|b| format!("{b:x}")).collect()
}

impl RunRecord {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# gradsched run v{RUN_CSV_VERSION}\nt,tau,m,active_mask,loss,grad_norm,refresh\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.t,
                s.tau,
                s.m,
                mask_hex(&s.active, self.num_tasks),
                s.loss,
                s.grad_norm,
                u8::from(s.refresh)
            ));
        }
        out
    }

    /// Summary document: config echo, windows, counters and a SHA-256 over
    /// the config and the CSV body.
    pub fn summary_json(&self) -> serde_json::Value {
        let config = serde_json::to_value(&self.config).expect("config serializes");
        let mut h = Sha256::new();
        h.update(config.to_string().as_bytes());
        h.update(self.to_csv().as_bytes());
        let hash = hex(&h.finalize());
        serde_json::json!({
            "csv_version": RUN_CSV_VERSION,
            "config": config,
            "num_tasks": self.num_tasks,
            "combinator": self.combinator.name(),
            "num_steps": self.steps.len(),
            "windows": self.windows,
            "sketch_cost": self.sketch_cost,
            "descent_violations": self.descent_violations,
            "content_hash": hash,
        })
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_layout() {
        assert_eq!(mask_hex(&[], 3), "0");
        assert_eq!(mask_hex(&[0, 2], 3), "5");
        assert_eq!(mask_hex(&[4], 8), "10");
        assert_eq!(mask_hex(&[0, 1, 2, 3, 4], 5), "1f");
    }
}

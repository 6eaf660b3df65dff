//! Interference-aware task scheduling for multi-task gradient descent.
//!
//! Per-task gradient EMAs feed a negated-cosine interference matrix, which is
//! thresholded into a conflict graph, colored greedily (largest degree
//! first), and executed one color class per step. The [`sim`] module
//! provides synthetic task families on which every guarantee of the
//! pipeline can be checked numerically.

pub mod bench;
pub mod config;
pub mod conflict_graph;
pub mod experiments;
pub mod grad_stats;
pub mod linalg;
pub mod sketch;
pub mod optim;
pub mod record;
pub mod scheduler;
pub mod sim;

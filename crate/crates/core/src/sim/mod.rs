//! Synthetic task families on which the scheduler's guarantees can be
//! checked numerically: planted-partition gradient oracles, quadratic
//! objectives, and the Monte-Carlo drivers built on them.

mod convergence;
mod descent;
mod oracles;
mod planted;
mod quadratic;
mod recovery;

pub use convergence::{
    convergence_experiment, convergence_testbed, least_squares, mean_sq_grad_trace, ClassSampling, ConvergencePoint,
    ConvergenceResult, ConvergenceSpec,
};
pub use descent::{descent_check, is_tau_compatible, tau_eff, DescentCheck};
pub use oracles::{GroupSwap, PlantedOracle, QuadraticOracle};
pub use planted::{make_planted_suite, MarginViolation, PlantedSpec, PlantedTaskSuite};
pub use quadratic::{
    block_diagonal_instance, random_psd, reference_instance, CrossTerm, ImprovementTerms, QuadraticMTL, QuadraticTask,
};
pub use recovery::{
    beta_for_neff, calibrate_constant, recovery_rate, recovery_trial, required_neff, trial_seed, ExperimentResult,
    TrialOutcome, CALIBRATED_C,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameter `{name}`: {msg}")]
    InvalidParam { name: &'static str, msg: String },
    #[error("margin not realized: {0}")]
    InfeasibleMargin(String),
    #[error("step size {eta} outside (0, 1/L] = (0, {limit}]")]
    StepOutOfRange { eta: f64, limit: f64 },
}

impl SimError {
    pub(crate) fn invalid(name: &'static str, msg: impl Into<String>) -> Self {
        SimError::InvalidParam { name, msg: msg.into() }
    }
}

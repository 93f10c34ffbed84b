//! The action functional `Φ = a − b` on truncated path space, its gradient
//! flow, the linking sets and the minimax search for leafwise chords.

mod functional;
mod linking;
mod minimax;

use thiserror::Error;

pub use functional::{flow_for, ActionFunctional, FlowOptions, FlowState, TOL_MONO};
pub use linking::{
    build_sigma_sample, check_linking_bounds, e_plus_coefficient, in_sigma, integral_inequality_check,
    integrate_q_pi, random_sigma_paths, IntegralInequalityReport, LinkingConfig, LinkingReport,
};
pub use minimax::{
    assess_chord, minimax_estimate, refine_critical_point, validate_chord, ChordResult, MinimaxOptions,
    MinimaxRecord, MinimaxRun,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChordError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("flow step of size {dt:e} raised Φ by {increase:e}")]
    StepRejected { dt: f64, increase: f64 },
    #[error("linking bounds not found: {0}")]
    BoundsNotFound(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("chord validation failed: {reason}")]
    ValidationFailed { reason: String, candidate: Box<ChordResult> },
}

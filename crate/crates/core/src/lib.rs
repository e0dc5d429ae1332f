//! Maximum-entropy merging of overlapping marginal and conditional statistics,
//! with causal edge detection and interventional bounds on the fitted models.

pub mod causal;
pub mod domain;
pub mod effects;
pub mod error;
pub mod eval;
pub mod formats;
pub mod numeric;
pub mod simulate;
pub mod solver;

pub use domain::*;
pub use error::{Error, Result};
pub use solver::{
    dual_gradient, dual_objective, fit, log_partition, query_conditional, query_prob, CauseMarginal, LogPartition,
    MaxEntProblem, MaxEntSolution, Objective, ProblemMode, SolverConfig,
};

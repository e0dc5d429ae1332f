use serde::{Deserialize, Serialize};

use crate::domain::{ConstraintSet, TabularDistribution, VariableSet, DEFAULT_STATE_CAP};

/// Which objective the optimizer minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// L1-regularized Lagrangian dual, minimized by proximal gradient descent.
    #[default]
    Dual,
    /// Sum of squared moment residuals beyond the slack, minimized by Levenberg-Marquardt.
    SquaredResidual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub objective: Objective,
    /// Convergence threshold on the largest constraint residual (beyond slack).
    pub tolerance: f64,
    pub max_iterations: usize,
    pub state_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            objective: Objective::Dual,
            tolerance: 1e-3,
            max_iterations: 100_000,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

impl SolverConfig {
    /// Tolerance 1e-8, for property checks.
    pub fn strict() -> Self {
        SolverConfig {
            tolerance: 1e-8,
            max_iterations: 500_000,
            ..Self::default()
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }
}

/// Where the distribution of the non-target variables comes from in conditional mode.
#[derive(Debug, Clone, PartialEq)]
pub enum CauseMarginal {
    /// Supplied distribution over every variable except the target.
    Known(TabularDistribution),
    /// Fitted first, as a joint maximum-entropy model over the non-target
    /// variables, from the constraints that do not involve the target.
    Estimated,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemMode {
    /// Maximize the joint entropy.
    Joint,
    /// Maximize the conditional entropy of `target` given all other variables.
    Conditional { target: String, cause_marginal: CauseMarginal },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntProblem {
    pub variables: VariableSet,
    pub constraints: ConstraintSet,
    pub mode: ProblemMode,
    pub config: SolverConfig,
    /// Carried into the solution for provenance; fitting itself is deterministic.
    pub seed: Option<u64>,
}

impl MaxEntProblem {
    pub fn joint(variables: VariableSet, constraints: ConstraintSet) -> Self {
        MaxEntProblem {
            variables,
            constraints,
            mode: ProblemMode::Joint,
            config: SolverConfig::default(),
            seed: None,
        }
    }

    pub fn conditional(
        variables: VariableSet,
        constraints: ConstraintSet,
        target: impl Into<String>,
        cause_marginal: CauseMarginal,
    ) -> Self {
        MaxEntProblem {
            variables,
            constraints,
            mode: ProblemMode::Conditional {
                target: target.into(),
                cause_marginal,
            },
            config: SolverConfig::default(),
            seed: None,
        }
    }

    pub fn with_config(mut self, config: SolverConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn target(&self) -> Option<&str> {
        match &self.mode {
            ProblemMode::Joint => None,
            ProblemMode::Conditional { target, .. } => Some(target),
        }
    }
}

use serde::{Deserialize, Serialize};

use super::design::{linearize, Linearized};
use super::problem::SolverConfig;
use crate::domain::{Assignment, Constraint, ConstraintSet, FeatureSpec, TabularDistribution, VariableSet};
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

pub const SOLUTION_FORMAT: &str = "maxent-merge/solution/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalSource {
    Known,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolutionMode {
    Joint,
    Conditional { target: String, cause_marginal: MarginalSource },
}

/// One multiplier, keyed like the constraint it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub feature_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Assignment>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEntry {
    pub condition: Assignment,
    pub value: f64,
}

/// Normalizers of the fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogPartition {
    /// `p(x) = exp(lambda . f(x) - alpha)`
    Joint { alpha: f64 },
    /// `p(x_j | rest) = exp(lambda . g(x) - beta(rest))`, one entry per state of
    /// the non-target variables in row-major order.
    Conditional { beta: Vec<BetaEntry> },
}

/// A fitted model with everything needed to query it and to audit the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntSolution {
    pub format: String,
    pub variables: VariableSet,
    pub mode: SolutionMode,
    pub features: Vec<FeatureSpec>,
    pub constraints: Vec<Constraint>,
    /// Aligned with `constraints`.
    pub multipliers: Vec<Multiplier>,
    pub log_partition: LogPartition,
    /// `|model moment - target|` per constraint, in the units of the constraint.
    pub residuals: Vec<f64>,
    /// Value of the L1-regularized dual at the returned multipliers.
    pub dual_objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub config: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Distribution of the non-target variables (conditional mode only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause_marginal: Option<TabularDistribution>,
    /// Joint fit that produced `cause_marginal` when it was estimated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause_fit: Option<Box<MaxEntSolution>>,
}

impl MaxEntSolution {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.multipliers.iter().map(|m| m.value).collect()
    }

    /// Multiplier of the constraint on `feature_id` under `condition`.
    pub fn multiplier(&self, feature_id: &str, condition: Option<&Assignment>) -> Option<f64> {
        let key = Constraint {
            feature_id: feature_id.to_string(),
            kind: match condition {
                None => crate::domain::ConstraintKind::Mean,
                Some(c) => crate::domain::ConstraintKind::CondMean { condition: c.clone() },
            },
            target: 0.0,
            slack: 0.0,
            sample_size: None,
        }
        .key();
        self.constraints
            .iter()
            .position(|c| c.key() == key)
            .map(|i| self.multipliers[i].value)
    }

    pub fn target(&self) -> Option<&str> {
        match &self.mode {
            SolutionMode::Joint => None,
            SolutionMode::Conditional { target, .. } => Some(target),
        }
    }

    fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::Unconverged)
        }
    }

    fn constraint_set(&self) -> ConstraintSet {
        ConstraintSet {
            features: self.features.clone(),
            constraints: self.constraints.clone(),
        }
    }

    fn scorer(&self) -> Result<Vec<Linearized>> {
        linearize(
            &self.variables,
            &self.constraint_set(),
            matches!(self.mode, SolutionMode::Joint),
        )
    }

    fn score(lin: &[Linearized], lambda: &[f64], state: &[usize]) -> f64 {
        lin.iter().zip(lambda).map(|(l, w)| w * l.eval(state)).sum()
    }

    /// Model probabilities of every target value in each cause cell, row-major
    /// over the non-target variables.
    pub fn conditional_table(&self) -> Result<Vec<Vec<f64>>> {
        self.ensure_converged()?;
        let target = self
            .target()
            .ok_or_else(|| Error::WrongMode("conditional table of a joint solution".into()))?;
        let j = self.variables.index_of(target)?;
        let cause = self.variables.without(target)?;
        let lin = self.scorer()?;
        let lambda = self.lambdas();
        let dj = self.variables.domain_size(j);
        let mut state = vec![0; self.variables.len()];
        let mut out = Vec::new();
        for cstate in cause.states(self.config.state_cap)? {
            let scores: Vec<f64> = (0..dj)
                .map(|xj| {
                    let mut it = cstate.iter();
                    for (i, slot) in state.iter_mut().enumerate() {
                        *slot = if i == j { xj } else { *it.next().expect("cause state length") };
                    }
                    Self::score(&lin, &lambda, &state)
                })
                .collect();
            let lz = log_sum_exp(&scores);
            out.push(scores.iter().map(|s| (s - lz).exp()).collect());
        }
        Ok(out)
    }

    /// Full fitted distribution over every variable.
    pub fn joint(&self) -> Result<TabularDistribution> {
        self.ensure_converged()?;
        match (&self.mode, &self.log_partition) {
            (SolutionMode::Joint, LogPartition::Joint { alpha }) => {
                let lin = self.scorer()?;
                let lambda = self.lambdas();
                let probs: Vec<f64> = self
                    .variables
                    .states(self.config.state_cap)?
                    .map(|s| (Self::score(&lin, &lambda, &s) - alpha).exp())
                    .collect();
                TabularDistribution::from_weights(self.variables.clone(), probs)
            }
            (SolutionMode::Conditional { target, .. }, _) => {
                let table = self.conditional_table()?;
                let cause = self
                    .cause_marginal
                    .as_ref()
                    .ok_or_else(|| Error::InvalidProblem("conditional solution without a cause marginal".into()))?;
                let j = self.variables.index_of(target)?;
                let n = self.variables.state_count(self.config.state_cap)?;
                let mut probs = vec![0.0; n];
                for (c, (cstate, pc)) in cause.iter().enumerate() {
                    for (xj, q) in table[c].iter().enumerate() {
                        let mut state = cstate.clone();
                        state.insert(j, xj);
                        probs[self.variables.state_index(&state)] = pc * q;
                    }
                }
                TabularDistribution::from_weights(self.variables.clone(), probs)
            }
            _ => Err(Error::InvalidProblem("mode and log partition disagree".into())),
        }
    }

    /// `p(x)` for a full or partial assignment.
    pub fn prob(&self, x: &Assignment) -> Result<f64> {
        self.ensure_converged()?;
        if x.len() == self.variables.len() {
            if let (SolutionMode::Joint, LogPartition::Joint { alpha }) = (&self.mode, &self.log_partition) {
                let state = x.to_state(&self.variables)?;
                let lin = self.scorer()?;
                return Ok((Self::score(&lin, &self.lambdas(), &state) - alpha).exp());
            }
        }
        self.joint()?.prob_event(x)
    }

    /// `p(x_target | rest)` for a full assignment; conditional mode only.
    pub fn conditional_prob(&self, x: &Assignment) -> Result<f64> {
        self.ensure_converged()?;
        let (SolutionMode::Conditional { target, .. }, LogPartition::Conditional { beta }) =
            (&self.mode, &self.log_partition)
        else {
            return Err(Error::WrongMode("conditional query on a joint solution".into()));
        };
        let state = x.to_state(&self.variables)?;
        let j = self.variables.index_of(target)?;
        let cause = self.variables.without(target)?;
        let mut cstate = state.clone();
        cstate.remove(j);
        let lin = self.scorer()?;
        let b = beta[cause.state_index(&cstate)].value;
        Ok((Self::score(&lin, &self.lambdas(), &state) - b).exp())
    }

    /// `E[f]` or `E[f | condition]` under the fitted joint.
    pub fn moment(&self, feature: &FeatureSpec, condition: Option<&Assignment>) -> Result<f64> {
        let joint = self.joint()?;
        match condition {
            None => joint.expectation(feature),
            Some(c) => joint.conditional_expectation(feature, c),
        }
    }

    /// Maximized entropy: `H(p)` in joint mode, `H(X_j | rest)` in conditional mode.
    pub fn entropy(&self) -> Result<f64> {
        match &self.mode {
            SolutionMode::Joint => Ok(self.joint()?.entropy()),
            SolutionMode::Conditional { .. } => {
                let table = self.conditional_table()?;
                let cause = self.cause_marginal.as_ref().ok_or(Error::Unconverged)?;
                Ok(cause
                    .probs()
                    .iter()
                    .zip(&table)
                    .map(|(pc, row)| {
                        pc * -row.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>()
                    })
                    .sum())
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sol: MaxEntSolution = serde_json::from_str(s)?;
        if sol.format != SOLUTION_FORMAT {
            return Err(Error::InvalidProblem(format!("unsupported solution format `{}`", sol.format)));
        }
        if sol.multipliers.len() != sol.constraints.len() || sol.residuals.len() != sol.constraints.len() {
            return Err(Error::InvalidProblem("multipliers, residuals and constraints are misaligned".into()));
        }
        Ok(sol)
    }
}

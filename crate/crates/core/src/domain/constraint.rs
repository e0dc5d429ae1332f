use serde::{Deserialize, Serialize};

use super::feature::FeatureSpec;
use super::variables::{Assignment, VariableSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintKind {
    /// `|E[f] - target| <= slack`
    Mean,
    /// `|E[f | condition] - target| <= slack`
    CondMean { condition: Assignment },
}

/// One moment constraint with its slack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub feature_id: String,
    #[serde(flatten)]
    pub kind: ConstraintKind,
    pub target: f64,
    pub slack: f64,
    /// Number of observations the target was estimated from, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
}

impl Constraint {
    pub fn mean(feature_id: impl Into<String>, target: f64) -> Self {
        Constraint {
            feature_id: feature_id.into(),
            kind: ConstraintKind::Mean,
            target,
            slack: 0.0,
            sample_size: None,
        }
    }

    pub fn cond_mean(feature_id: impl Into<String>, condition: Assignment, target: f64) -> Self {
        Constraint {
            feature_id: feature_id.into(),
            kind: ConstraintKind::CondMean { condition },
            target,
            slack: 0.0,
            sample_size: None,
        }
    }

    pub fn with_slack(mut self, slack: f64) -> Self {
        self.slack = slack;
        self
    }

    pub fn with_sample_size(mut self, m: usize) -> Self {
        self.sample_size = Some(m);
        self
    }

    pub fn condition(&self) -> Option<&Assignment> {
        match &self.kind {
            ConstraintKind::Mean => None,
            ConstraintKind::CondMean { condition } => Some(condition),
        }
    }

    /// `(feature_id, condition)` with the condition's entries sorted by name.
    pub fn key(&self) -> (String, Option<String>) {
        let cond = self.condition().map(|c| {
            let mut entries = c.entries().to_vec();
            entries.sort();
            Assignment::new(entries).to_string()
        });
        (self.feature_id.clone(), cond)
    }

    pub fn label(&self) -> String {
        match self.condition() {
            None => self.feature_id.clone(),
            Some(c) => format!("{} | {c}", self.feature_id),
        }
    }
}

/// Features plus the constraints that reference them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub features: Vec<FeatureSpec>,
    pub constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn feature(&self, id: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.id == id)
    }

    /// Register a feature; re-adding an identical spec is a no-op.
    pub fn add_feature(&mut self, feature: FeatureSpec) -> Result<()> {
        match self.feature(&feature.id) {
            Some(existing) if *existing == feature => Ok(()),
            Some(_) => Err(Error::InvalidFeature {
                id: feature.id,
                reason: "id already used by a different feature".into(),
            }),
            None => {
                self.features.push(feature);
                Ok(())
            }
        }
    }

    pub fn push(&mut self, constraint: Constraint) {
        self.constraints.push(constraint);
    }

    /// Union of two constraint sets, as when merging datasets.
    pub fn merge(mut self, other: ConstraintSet) -> Result<ConstraintSet> {
        for f in other.features {
            self.add_feature(f)?;
        }
        self.constraints.extend(other.constraints);
        Ok(self)
    }

    /// Set `slack = scale / sqrt(M)` on every constraint that records its sample size `M`.
    pub fn apply_slack_scale(&mut self, scale: f64) {
        for c in &mut self.constraints {
            if let Some(m) = c.sample_size {
                c.slack = if m == 0 { 0.0 } else { scale / (m as f64).sqrt() };
            }
        }
    }

    /// Variables the constraint touches: the feature scope followed by the condition variables.
    pub fn full_scope(&self, constraint: &Constraint) -> Result<Vec<String>> {
        let feature = self.feature(&constraint.feature_id).ok_or_else(|| Error::InvalidConstraint {
            feature_id: constraint.feature_id.clone(),
            reason: "unknown feature".into(),
        })?;
        let mut scope = feature.scope.clone();
        if let Some(c) = constraint.condition() {
            scope.extend(c.variables().map(str::to_string));
        }
        Ok(scope)
    }

    pub fn validate(&self, vars: &VariableSet) -> Result<()> {
        for (i, f) in self.features.iter().enumerate() {
            f.resolve(vars)?;
            if self.features[..i].iter().any(|g| g.id == f.id) {
                return Err(Error::InvalidFeature {
                    id: f.id.clone(),
                    reason: "duplicate feature id".into(),
                });
            }
        }
        let mut seen: Vec<((String, Option<String>), f64)> = Vec::new();
        for c in &self.constraints {
            let bad = |reason: String| Error::InvalidConstraint {
                feature_id: c.feature_id.clone(),
                reason,
            };
            let feature = self.feature(&c.feature_id).ok_or_else(|| bad("unknown feature".into()))?;
            if !c.target.is_finite() {
                return Err(bad("target is not finite".into()));
            }
            if !(c.slack.is_finite() && c.slack >= 0.0) {
                return Err(bad(format!("slack must be finite and >= 0, got {}", c.slack)));
            }
            if let Some(cond) = c.condition() {
                if cond.is_empty() {
                    return Err(bad("conditional mean without a condition".into()));
                }
                cond.resolve(vars)?;
                if let Some(v) = cond.variables().find(|v| feature.scope.iter().any(|s| s == v)) {
                    return Err(bad(format!("condition variable `{v}` is also in the feature scope")));
                }
            }
            let key = c.key();
            if let Some((_, prev)) = seen.iter().find(|(k, _)| *k == key) {
                let reason = if *prev == c.target {
                    "duplicate constraint".to_string()
                } else {
                    format!("conflicting targets {prev} and {}", c.target)
                };
                return Err(bad(reason));
            }
            seen.push((key, c.target));
        }
        Ok(())
    }
}

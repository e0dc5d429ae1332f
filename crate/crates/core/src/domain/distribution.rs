use serde::{Deserialize, Serialize};

use super::feature::FeatureSpec;
use super::variables::{Assignment, VariableSet, DEFAULT_STATE_CAP};
use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-12;

/// Explicit probability table over every full state of a universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct TabularDistribution {
    variables: VariableSet,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDistribution {
    variables: VariableSet,
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for TabularDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        TabularDistribution::new(raw.variables, raw.probs)
    }
}

impl TabularDistribution {
    /// Probabilities in row-major state order; total mass must be within 1e-12 of 1.
    pub fn new(variables: VariableSet, probs: Vec<f64>) -> Result<Self> {
        let n = variables.state_count(DEFAULT_STATE_CAP)?;
        if probs.len() != n {
            return Err(Error::InvalidDistribution(format!(
                "{} probabilities for {n} states",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("probability {p} is not in [0, inf)")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("total mass {total} is not 1")));
        }
        Ok(TabularDistribution { variables, probs })
    }

    /// Normalize non-negative weights into a distribution.
    pub fn from_weights(variables: VariableSet, weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("weight {w} is not in [0, inf)")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        TabularDistribution::new(variables, probs)
    }

    pub fn uniform(variables: VariableSet) -> Result<Self> {
        let n = variables.state_count(DEFAULT_STATE_CAP)?;
        TabularDistribution::new(variables, vec![1.0 / n as f64; n])
    }

    pub fn variables(&self) -> &VariableSet {
        &self.variables
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, state: &[usize]) -> f64 {
        self.probs[self.variables.state_index(state)]
    }

    /// `(state, probability)` pairs in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (self.variables.state_at(i), p))
    }

    /// Probability of a partial assignment.
    pub fn prob_event(&self, event: &Assignment) -> Result<f64> {
        let pairs = event.resolve(&self.variables)?;
        Ok(self
            .iter()
            .filter(|(s, _)| pairs.iter().all(|&(i, v)| s[i] == v))
            .map(|(_, p)| p)
            .sum())
    }

    /// Sum out every variable not named in `scope`; the result follows the order of `scope`.
    pub fn marginalize<S: AsRef<str>>(&self, scope: &[S]) -> Result<TabularDistribution> {
        let sub = self.variables.subset(scope)?;
        let positions: Vec<usize> = scope
            .iter()
            .map(|s| self.variables.index_of(s.as_ref()))
            .collect::<Result<_>>()?;
        let mut probs = vec![0.0; sub.state_count(DEFAULT_STATE_CAP)?];
        let mut sub_state = vec![0; positions.len()];
        for (state, p) in self.iter() {
            for (slot, &i) in sub_state.iter_mut().zip(&positions) {
                *slot = state[i];
            }
            probs[sub.state_index(&sub_state)] += p;
        }
        // summation error can push the total a hair away from 1
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("marginal mass {total} drifted from 1")));
        }
        Ok(TabularDistribution { variables: sub, probs })
    }

    pub fn expectation(&self, feature: &FeatureSpec) -> Result<f64> {
        let f = feature.resolve(&self.variables)?;
        Ok(self.iter().map(|(s, p)| p * f.eval(&s)).sum())
    }

    /// `E[f | condition]`; errors when the condition has zero probability.
    pub fn conditional_expectation(&self, feature: &FeatureSpec, condition: &Assignment) -> Result<f64> {
        let f = feature.resolve(&self.variables)?;
        let pairs = condition.resolve(&self.variables)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (s, p) in self.iter() {
            if pairs.iter().all(|&(i, v)| s[i] == v) {
                num += p * f.eval(&s);
                den += p;
            }
        }
        if den <= 0.0 {
            return Err(Error::ZeroSupportCondition {
                condition: condition.to_string(),
            });
        }
        Ok(num / den)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    /// Total variation distance to a distribution over the same universe.
    pub fn total_variation(&self, other: &TabularDistribution) -> Result<f64> {
        if self.variables != other.variables {
            return Err(Error::InvalidDistribution("distributions live on different universes".into()));
        }
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }
}

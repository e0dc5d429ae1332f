use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::variables::{Assignment, VariableSet};
use crate::error::{Error, Result};

/// How a feature maps the values on its scope to a real number.
///
/// Product features use the position of each value in its variable's
/// domain as its numeric code, so binary domains code as `{0, 1}` in
/// declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    /// 1 when every scope variable takes the listed value, else 0.
    Indicator { values: Vec<String> },
    /// Product of the numeric codes of the scope values.
    Product,
    /// Arbitrary table over scope states, row-major (first scope variable slowest).
    ValueTable { table: Vec<f64> },
}

/// A real-valued function of a subset of the variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub id: String,
    pub scope: Vec<String>,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn indicator<K: AsRef<str>, V: AsRef<str>>(id: impl Into<String>, values: &[(K, V)]) -> Self {
        FeatureSpec {
            id: id.into(),
            scope: values.iter().map(|(k, _)| k.as_ref().to_string()).collect(),
            kind: FeatureKind::Indicator {
                values: values.iter().map(|(_, v)| v.as_ref().to_string()).collect(),
            },
        }
    }

    pub fn product<S: AsRef<str>>(id: impl Into<String>, scope: &[S]) -> Self {
        FeatureSpec {
            id: id.into(),
            scope: scope.iter().map(|s| s.as_ref().to_string()).collect(),
            kind: FeatureKind::Product,
        }
    }

    /// Numeric code of a single variable; its expectation is the variable's mean.
    pub fn mean(id: impl Into<String>, var: &str) -> Self {
        FeatureSpec::product(id, &[var])
    }

    pub fn value_table<S: AsRef<str>>(id: impl Into<String>, scope: &[S], table: Vec<f64>) -> Self {
        FeatureSpec {
            id: id.into(),
            scope: scope.iter().map(|s| s.as_ref().to_string()).collect(),
            kind: FeatureKind::ValueTable { table },
        }
    }

    /// Check the feature against a universe and compile it for fast evaluation.
    pub fn resolve(&self, vars: &VariableSet) -> Result<ResolvedFeature> {
        let invalid = |reason: String| Error::InvalidFeature {
            id: self.id.clone(),
            reason,
        };
        if self.id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.scope.is_empty() {
            return Err(invalid("empty scope".into()));
        }
        let mut scope = Vec::with_capacity(self.scope.len());
        for name in &self.scope {
            let i = vars.index_of(name)?;
            if scope.contains(&i) {
                return Err(invalid(format!("variable `{name}` repeated in scope")));
            }
            scope.push(i);
        }
        let kind = match &self.kind {
            FeatureKind::Indicator { values } => {
                if values.len() != scope.len() {
                    return Err(invalid("indicator needs one value per scope variable".into()));
                }
                let mut idx = Vec::with_capacity(values.len());
                for (&i, label) in scope.iter().zip(values) {
                    let v = vars.get(i);
                    idx.push(v.value_index(label).ok_or_else(|| {
                        invalid(format!("`{label}` is not in the domain of `{}`", v.name))
                    })?);
                }
                Resolved::Indicator(idx)
            }
            FeatureKind::Product => Resolved::Product,
            FeatureKind::ValueTable { table } => {
                let size: usize = scope.iter().map(|&i| vars.domain_size(i)).product();
                if table.len() != size {
                    return Err(invalid(format!("table has {} entries, scope has {size} states", table.len())));
                }
                if table.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("table holds a non-finite value".into()));
                }
                Resolved::Table {
                    sizes: scope.iter().map(|&i| vars.domain_size(i)).collect(),
                    table: table.clone(),
                }
            }
        };
        Ok(ResolvedFeature { scope, kind })
    }
}

#[derive(Debug, Clone)]
enum Resolved {
    Indicator(Vec<usize>),
    Product,
    Table { sizes: Vec<usize>, table: Vec<f64> },
}

/// A feature bound to variable positions in a particular universe.
#[derive(Debug, Clone)]
pub struct ResolvedFeature {
    scope: Vec<usize>,
    kind: Resolved,
}

impl ResolvedFeature {
    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    /// Evaluate on a full state of the universe the feature was resolved in.
    pub fn eval(&self, state: &[usize]) -> f64 {
        match &self.kind {
            Resolved::Indicator(values) => {
                let hit = self.scope.iter().zip(values).all(|(&i, &v)| state[i] == v);
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
            Resolved::Product => self.scope.iter().map(|&i| state[i] as f64).product(),
            Resolved::Table { sizes, table } => {
                let pos = self
                    .scope
                    .iter()
                    .zip(sizes)
                    .fold(0, |acc, (&i, &d)| acc * d + state[i]);
                table[pos]
            }
        }
    }

    /// Smallest and largest value over the scope's states.
    pub fn range(&self, vars: &VariableSet) -> (f64, f64) {
        match &self.kind {
            Resolved::Indicator(_) => (0.0, 1.0),
            // codes are non-negative and every variable can take code 0
            Resolved::Product => (
                0.0,
                self.scope
                    .iter()
                    .map(|&i| (vars.domain_size(i) - 1) as f64)
                    .product(),
            ),
            Resolved::Table { table, .. } => (
                table.iter().copied().fold(f64::INFINITY, f64::min),
                table.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
        }
    }
}

/// Evaluate `feature` on an assignment that covers its scope.
pub fn evaluate_feature(feature: &FeatureSpec, vars: &VariableSet, x: &Assignment) -> Result<f64> {
    let resolved = feature.resolve(vars)?;
    let pairs = x.resolve(vars)?;
    let mut state = vec![0usize; vars.len()];
    for (pos, &i) in resolved.scope().iter().enumerate() {
        match pairs.iter().find(|&&(j, _)| j == i) {
            Some(&(_, v)) => state[i] = v,
            None => {
                return Err(Error::MissingScopeVariable {
                    feature: feature.id.clone(),
                    variable: feature.scope[pos].clone(),
                })
            }
        }
    }
    Ok(resolved.eval(&state))
}

/// Rank of the features as vectors over the enumerated state space.
///
/// With `include_constant` the all-ones vector is appended, which is the
/// relevant notion for exponential families where constants are absorbed
/// by the normalizer.
pub fn feature_rank(vars: &VariableSet, features: &[FeatureSpec], include_constant: bool, cap: usize) -> Result<usize> {
    let resolved: Vec<_> = features.iter().map(|f| f.resolve(vars)).collect::<Result<_>>()?;
    let k = resolved.len() + usize::from(include_constant);
    if k == 0 {
        return Ok(0);
    }
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut row = vec![0.0; k];
    for state in vars.states(cap)? {
        for (slot, f) in row.iter_mut().zip(&resolved) {
            *slot = f.eval(&state);
        }
        if include_constant {
            row[k - 1] = 1.0;
        }
        for a in 0..k {
            if row[a] == 0.0 {
                continue;
            }
            for b in 0..k {
                gram[(a, b)] += row[a] * row[b];
            }
        }
    }
    let eig = gram.symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let tol = top * 1e-10 * k as f64;
    Ok(eig.eigenvalues.iter().filter(|&&e| e > tol).count())
}

/// Fails with [`Error::RankDeficient`] unless the features, together with
/// the constant function, are linearly independent.
pub fn check_linear_independence(vars: &VariableSet, features: &[FeatureSpec], cap: usize) -> Result<()> {
    let rank = feature_rank(vars, features, true, cap)?;
    let expected = features.len() + 1;
    if rank < expected {
        return Err(Error::RankDeficient { rank, expected });
    }
    Ok(())
}

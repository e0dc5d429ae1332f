use super::constraint::{Constraint, ConstraintSet};
use super::distribution::TabularDistribution;
use super::feature::FeatureSpec;
use super::variables::{Assignment, VariableSet, DEFAULT_STATE_CAP};
use crate::error::{Error, Result};

/// Observations over a set of columns, stored as domain value indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    variables: VariableSet,
    rows: Vec<Vec<usize>>,
    pub provenance: Option<String>,
}

impl SampleTable {
    pub fn new(variables: VariableSet, rows: Vec<Vec<usize>>) -> Result<Self> {
        for (r, row) in rows.iter().enumerate() {
            if row.len() != variables.len() {
                return Err(Error::InvalidDistribution(format!(
                    "row {r} has {} values for {} columns",
                    row.len(),
                    variables.len()
                )));
            }
            for (i, &x) in row.iter().enumerate() {
                if x >= variables.domain_size(i) {
                    return Err(Error::InvalidAssignment(format!(
                        "row {r}: value index {x} outside the domain of `{}`",
                        variables.get(i).name
                    )));
                }
            }
        }
        Ok(SampleTable {
            variables,
            rows,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = Some(provenance.into());
        self
    }

    pub fn variables(&self) -> &VariableSet {
        &self.variables
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Keep only the named columns, in the order given.
    pub fn select<S: AsRef<str>>(&self, columns: &[S]) -> Result<SampleTable> {
        let vars = self.variables.subset(columns)?;
        let pos: Vec<usize> = columns
            .iter()
            .map(|c| self.variables.index_of(c.as_ref()))
            .collect::<Result<_>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| pos.iter().map(|&i| r[i]).collect())
            .collect();
        Ok(SampleTable {
            variables: vars,
            rows,
            provenance: self.provenance.clone(),
        })
    }

    /// Relative frequencies over the table's columns.
    pub fn empirical_distribution(&self) -> Result<TabularDistribution> {
        let n = self.variables.state_count(DEFAULT_STATE_CAP)?;
        let mut counts = vec![0.0; n];
        for r in &self.rows {
            counts[self.variables.state_index(r)] += 1.0;
        }
        TabularDistribution::from_weights(self.variables.clone(), counts)
    }
}

/// What to do when a conditioning cell has no observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyCellPolicy {
    #[default]
    Error,
    Drop,
}

/// Estimate conditional means within every cell of these variables.
#[derive(Debug, Clone, Default)]
pub struct Conditioning {
    pub variables: Vec<String>,
    pub empty_cells: EmptyCellPolicy,
}

impl Conditioning {
    pub fn on<S: AsRef<str>>(variables: &[S]) -> Self {
        Conditioning {
            variables: variables.iter().map(|s| s.as_ref().to_string()).collect(),
            empty_cells: EmptyCellPolicy::Error,
        }
    }
}

/// Sample moments of `features`, as constraints with zero slack and the
/// supporting sample size recorded.
///
/// Without conditioning every feature yields one `mean` constraint. With
/// conditioning every feature yields one `cond_mean` constraint per cell of
/// the conditioning variables, in row-major cell order.
pub fn empirical_moments(
    table: &SampleTable,
    features: &[FeatureSpec],
    conditioning: Option<&Conditioning>,
) -> Result<ConstraintSet> {
    if table.is_empty() {
        return Err(Error::EmptyCell {
            condition: "(whole table)".into(),
        });
    }
    let vars = table.variables();
    let mut set = ConstraintSet::new();
    for f in features {
        let resolved = f.resolve(vars)?;
        set.add_feature(f.clone())?;
        match conditioning {
            None => {
                let mean = table.rows().iter().map(|r| resolved.eval(r)).sum::<f64>() / table.len() as f64;
                set.push(Constraint::mean(&f.id, mean).with_sample_size(table.len()));
            }
            Some(cond) => {
                let cvars = vars.subset(&cond.variables)?;
                if let Some(v) = cond.variables.iter().find(|v| f.scope.contains(v)) {
                    return Err(Error::InvalidConfig(format!(
                        "conditioning variable `{v}` is in the scope of `{}`",
                        f.id
                    )));
                }
                let pos: Vec<usize> = cond
                    .variables
                    .iter()
                    .map(|c| vars.index_of(c))
                    .collect::<Result<_>>()?;
                let ncells = cvars.state_count(DEFAULT_STATE_CAP)?;
                let mut sums = vec![0.0; ncells];
                let mut counts = vec![0usize; ncells];
                let mut key = vec![0; pos.len()];
                for r in table.rows() {
                    for (slot, &i) in key.iter_mut().zip(&pos) {
                        *slot = r[i];
                    }
                    let c = cvars.state_index(&key);
                    sums[c] += resolved.eval(r);
                    counts[c] += 1;
                }
                for c in 0..ncells {
                    let condition = Assignment::from_state(&cvars, &cvars.state_at(c));
                    if counts[c] == 0 {
                        match cond.empty_cells {
                            EmptyCellPolicy::Error => {
                                return Err(Error::EmptyCell {
                                    condition: condition.to_string(),
                                })
                            }
                            EmptyCellPolicy::Drop => continue,
                        }
                    }
                    let mean = sums[c] / counts[c] as f64;
                    set.push(Constraint::cond_mean(&f.id, condition, mean).with_sample_size(counts[c]));
                }
            }
        }
    }
    Ok(set)
}

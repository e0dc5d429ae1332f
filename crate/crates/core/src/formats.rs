//! Text file formats: model declarations (JSON), constraint tables, samples
//! and distributions (CSV). Parse errors carry the source name and line.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{
    Assignment, Constraint, ConstraintKind, ConstraintSet, FeatureSpec, SampleTable, TabularDistribution, VariableSet,
};
use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution file before it is renormalized.
pub const FILE_MASS_TOL: f64 = 1e-6;

/// Contents of a `variables.json` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variables: VariableSet,
    #[serde(default)]
    pub features: Vec<FeatureSpec>,
}

impl ModelSpec {
    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text).map_err(|e| Error::parse(source, e.line(), e.to_string()))?;
        for f in &spec.features {
            f.resolve(&spec.variables)?;
        }
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        ModelSpec::from_json(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input)
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn csv_error(source: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(source, line, e.to_string())
}

const CONSTRAINT_COLUMNS: [&str; 6] = ["feature_id", "kind", "scope", "condition", "target", "slack"];

/// Parse a constraint table with columns
/// `feature_id,kind,scope,condition,target,slack` and an optional `n`
/// (number of observations behind the target).
///
/// Features named in the table that `features` does not declare become
/// product features over the `scope` column (`;`-separated).
pub fn parse_constraints<R: Read>(input: R, source: &str, vars: &VariableSet, features: &[FeatureSpec]) -> Result<ConstraintSet> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 6];
    for (k, name) in CONSTRAINT_COLUMNS.iter().enumerate() {
        idx[k] = col(name).ok_or_else(|| Error::parse(source, 1, format!("missing column `{name}`")))?;
    }
    let n_col = col("n");

    let mut set = ConstraintSet::new();
    for f in features {
        set.add_feature(f.clone())?;
    }
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = line_of(&record);
        let err = |m: String| Error::parse(source, line, m);
        let field = |k: usize| record.get(idx[k]).unwrap_or("");
        let id = field(0);
        if id.is_empty() {
            return Err(err("empty feature_id".into()));
        }
        let scope: Vec<&str> = field(2).split(';').map(str::trim).filter(|s| !s.is_empty()).collect();
        match set.feature(id) {
            Some(f) if !scope.is_empty() && f.scope != scope => {
                return Err(err(format!("scope `{}` does not match the declared scope of `{id}`", field(2))));
            }
            Some(_) => {}
            None if scope.is_empty() => return Err(err(format!("feature `{id}` is not declared and has no scope"))),
            None => {
                let f = FeatureSpec::product(id, &scope);
                f.resolve(vars).map_err(|e| err(e.to_string()))?;
                set.add_feature(f)?;
            }
        }
        let number = |k: usize| -> Result<f64> {
            let v: f64 = field(k).parse().map_err(|_| err(format!("`{}` is not a number in column {}", field(k), CONSTRAINT_COLUMNS[k])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(format!("non-finite {}", CONSTRAINT_COLUMNS[k])))
            }
        };
        let target = number(4)?;
        let slack = if field(5).is_empty() { 0.0 } else { number(5)? };
        if slack < 0.0 {
            return Err(err("negative slack".into()));
        }
        let condition = field(3);
        let mut c = match field(1) {
            "mean" if condition.is_empty() => Constraint::mean(id, target),
            "mean" => return Err(err("`mean` constraints take no condition".into())),
            "cond_mean" if condition.is_empty() => return Err(err("`cond_mean` needs a condition".into())),
            "cond_mean" => {
                let a: Assignment = condition.parse().map_err(|e: Error| err(e.to_string()))?;
                a.resolve(vars).map_err(|e| err(e.to_string()))?;
                Constraint::cond_mean(id, a, target)
            }
            other => return Err(err(format!("unknown kind `{other}` (expected mean or cond_mean)"))),
        }
        .with_slack(slack);
        if let Some(nc) = n_col {
            let raw = record.get(nc).unwrap_or("");
            if !raw.is_empty() {
                let m: usize = raw.parse().map_err(|_| err(format!("`{raw}` is not a count in column n")))?;
                c = c.with_sample_size(m);
            }
        }
        set.push(c);
    }
    set.validate(vars)?;
    Ok(set)
}

pub fn read_constraints(path: &Path, vars: &VariableSet, features: &[FeatureSpec]) -> Result<ConstraintSet> {
    let file = std::fs::File::open(path)?;
    parse_constraints(file, &path.display().to_string(), vars, features)
}

pub fn write_constraints<W: Write>(set: &ConstraintSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONSTRAINT_COLUMNS.iter().chain(std::iter::once(&"n")))?;
    for c in &set.constraints {
        let (kind, cond) = match &c.kind {
            ConstraintKind::Mean => ("mean", String::new()),
            ConstraintKind::CondMean { condition } => ("cond_mean", condition.to_string()),
        };
        let scope = set.feature(&c.feature_id).map(|f| f.scope.join(";")).unwrap_or_default();
        w.write_record([
            c.feature_id.clone(),
            kind.to_string(),
            scope,
            cond,
            c.target.to_string(),
            c.slack.to_string(),
            c.sample_size.map(|m| m.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a sample with a header of variable names and one observation per row.
///
/// With `vars`, columns are matched by name and values must be in each
/// domain. Without, binary-looking columns get domain `["0","1"]` and other
/// columns the sorted distinct values.
pub fn parse_sample<R: Read>(input: R, source: &str, vars: Option<&VariableSet>) -> Result<SampleTable> {
    let mut rdr = reader(input);
    let headers: Vec<String> = rdr.headers().map_err(|e| csv_error(source, e))?.iter().map(str::to_string).collect();
    let mut raw = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = line_of(&record);
        raw.push((line, record.iter().map(str::to_string).collect::<Vec<_>>()));
    }
    let vars = match vars {
        Some(v) => {
            let order: Vec<usize> = v
                .names()
                .map(|n| headers.iter().position(|h| h == n).ok_or_else(|| Error::parse(source, 1, format!("missing column `{n}`"))))
                .collect::<Result<_>>()?;
            let rows = raw
                .iter()
                .map(|(line, rec)| {
                    order
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| {
                            v.get(i)
                                .value_index(&rec[c])
                                .ok_or_else(|| Error::parse(source, *line, format!("`{}` is not in the domain of {}", rec[c], v.get(i).name)))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            return SampleTable::new(v.clone(), rows).map(|t| t.with_provenance(source));
        }
        None => {
            let mut out = Vec::with_capacity(headers.len());
            for (c, name) in headers.iter().enumerate() {
                let mut values: Vec<&str> = raw.iter().map(|(_, r)| r[c].as_str()).collect();
                values.sort_unstable();
                values.dedup();
                if values.iter().all(|v| *v == "0" || *v == "1") {
                    values = vec!["0", "1"];
                }
                out.push(crate::domain::Variable::new(name.clone(), values));
            }
            VariableSet::new(out)?
        }
    };
    let rows = raw
        .iter()
        .map(|(_, rec)| rec.iter().enumerate().map(|(i, s)| vars.get(i).value_index(s).expect("domain built from data")).collect())
        .collect();
    Ok(SampleTable::new(vars, rows)?.with_provenance(source))
}

pub fn read_sample(path: &Path, vars: Option<&VariableSet>) -> Result<SampleTable> {
    parse_sample(std::fs::File::open(path)?, &path.display().to_string(), vars)
}

pub fn write_sample<W: Write>(table: &SampleTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let vars = table.variables();
    w.write_record(vars.names())?;
    for row in table.rows() {
        w.write_record(vars.labels(row))?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a distribution table: one column per variable plus a `p` column.
/// The variable columns may be any subset of `universe`, in any order; the
/// result's variables follow the column order. States not listed get
/// probability 0. A total within [`FILE_MASS_TOL`] of 1 but visibly off is renormalized;
/// anything further off is an error.
pub fn parse_distribution<R: Read>(input: R, source: &str, universe: &VariableSet) -> Result<TabularDistribution> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let p_col = headers.iter().position(|h| h == "p").ok_or_else(|| Error::parse(source, 1, "missing column `p`"))?;
    let names: Vec<&str> = headers.iter().filter(|h| *h != "p").collect();
    if names.is_empty() {
        return Err(Error::parse(source, 1, "no variable columns"));
    }
    let vars = universe.subset(&names).map_err(|e| Error::parse(source, 1, e.to_string()))?;
    let cols: Vec<usize> = names.iter().map(|n| headers.iter().position(|h| h == *n).expect("header")).collect();
    let n = vars.state_count(crate::domain::DEFAULT_STATE_CAP)?;
    let mut probs = vec![0.0; n];
    let mut seen = vec![false; n];
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = line_of(&record);
        let err = |m: String| Error::parse(source, line, m);
        let mut state = Vec::with_capacity(cols.len());
        for (i, &c) in cols.iter().enumerate() {
            let label = record.get(c).unwrap_or("");
            state.push(vars.get(i).value_index(label).ok_or_else(|| err(format!("`{label}` is not in the domain of {}", vars.get(i).name)))?);
        }
        let raw = record.get(p_col).unwrap_or("");
        let p: f64 = raw.parse().map_err(|_| err(format!("`{raw}` is not a probability")))?;
        if !(p.is_finite() && p >= 0.0) {
            return Err(err(format!("probability {p} is not in [0, inf)")));
        }
        let k = vars.state_index(&state);
        if seen[k] {
            return Err(err("state listed twice".into()));
        }
        seen[k] = true;
        probs[k] = p;
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > FILE_MASS_TOL {
        return Err(Error::parse(source, 0, format!("probabilities sum to {total}, not 1")));
    }
    // a table that already sums to 1 up to rounding is kept bit for bit
    if (total - 1.0).abs() <= 1e-12 {
        return TabularDistribution::new(vars, probs);
    }
    TabularDistribution::from_weights(vars, probs)
}

pub fn read_distribution(path: &Path, universe: &VariableSet) -> Result<TabularDistribution> {
    parse_distribution(std::fs::File::open(path)?, &path.display().to_string(), universe)
}

pub fn write_distribution<W: Write>(p: &TabularDistribution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let vars = p.variables();
    w.write_record(vars.names().chain(std::iter::once("p")))?;
    for (state, prob) in p.iter() {
        let mut rec: Vec<String> = vars.labels(&state).into_iter().map(str::to_string).collect();
        rec.push(prob.to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

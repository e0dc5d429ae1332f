use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::graph::Dag;
use super::theta::theta_multi;
use crate::domain::{Constraint, ConstraintKind, ConstraintSet, FeatureSpec, TabularDistribution, VariableSet};
use crate::error::{Error, Result};
use crate::solver::{fit, MaxEntProblem, MaxEntSolution, SolutionMode, SolverConfig};

/// Default cutoff below which a multiplier fitted to exact moments counts as zero.
pub const ZERO_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// Max pairwise relative difference of the cause's condition multipliers.
    Theta,
    /// Max |lambda| on `{cause, target}`, divided by the largest bivariate |lambda| (floor 1).
    ScaledMaxAbsLambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Edge,
    NoEdge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitedMultiplier {
    pub feature_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    pub value: f64,
}

impl CitedMultiplier {
    fn of(c: &Constraint, value: f64) -> Self {
        CitedMultiplier {
            feature_id: c.feature_id.clone(),
            condition: c.condition().map(|a| a.to_string()),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDecision {
    pub cause: String,
    pub target: String,
    pub statistic_kind: Statistic,
    pub statistic: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    pub multipliers: Vec<CitedMultiplier>,
}

/// Edge decisions for every cause cited by a causal-order fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub target: String,
    pub threshold: f64,
    pub decisions: Vec<EdgeDecision>,
}

impl fmt::Display for EdgeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "target: {}  threshold: {}", self.target, self.threshold)?;
        writeln!(f, "{:<12} {:<40} {:>10}  edge", "variable", "multipliers", "statistic")?;
        for d in &self.decisions {
            let lambdas = d
                .multipliers
                .iter()
                .map(|m| format!("{:.4}", m.value))
                .collect::<Vec<_>>()
                .join(", ");
            let mark = match d.verdict {
                Verdict::Edge => "✓",
                Verdict::NoEdge => "✗",
            };
            writeln!(f, "{:<12} {:<40} {:>10.4}  {mark}", d.cause, lambdas, d.statistic)?;
        }
        Ok(())
    }
}

fn scope_of<'a>(solution: &'a MaxEntSolution, c: &Constraint) -> Result<&'a [String]> {
    solution
        .features
        .iter()
        .find(|f| f.id == c.feature_id)
        .map(|f| f.scope.as_slice())
        .ok_or_else(|| Error::InvalidConstraint {
            feature_id: c.feature_id.clone(),
            reason: "unknown feature".into(),
        })
}

/// Decide whether `cause -> target` exists from a fit in causal order.
///
/// With conditional-mean constraints conditioned on the cause, the edge is
/// absent when the multipliers are constant across the cause's values
/// (statistic: max pairwise theta within each group sharing a feature and
/// the remaining condition). With plain bivariate constraints, the edge is
/// absent when their multipliers are all zero. Ties count as edges.
pub fn decide_edge_known_order(solution: &MaxEntSolution, cause: &str, target: &str, t: f64) -> Result<EdgeDecision> {
    match &solution.mode {
        SolutionMode::Conditional { target: tj, .. } if tj == target => {}
        _ => {
            return Err(Error::WrongMode(format!(
                "edge decisions need a conditional fit with target `{target}`"
            )))
        }
    }
    solution.variables.index_of(cause)?;
    if cause == target {
        return Err(Error::InvalidConfig("cause and target coincide".into()));
    }
    let lambdas = solution.lambdas();
    let mut groups: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (k, c) in solution.constraints.iter().enumerate() {
        if let Some(cond) = c.condition() {
            if cond.get(cause).is_some() {
                let mut rest: Vec<_> = cond.entries().iter().filter(|(v, _)| v != cause).cloned().collect();
                rest.sort();
                let rest = rest.iter().map(|(v, x)| format!("{v}={x}")).collect::<Vec<_>>().join(";");
                groups.entry((c.feature_id.clone(), rest)).or_default().push(k);
            }
        }
    }
    let decide = |statistic_kind, statistic: f64, cited: Vec<usize>| EdgeDecision {
        cause: cause.to_string(),
        target: target.to_string(),
        statistic_kind,
        statistic,
        threshold: t,
        verdict: if statistic < t { Verdict::NoEdge } else { Verdict::Edge },
        multipliers: cited
            .into_iter()
            .map(|k| CitedMultiplier::of(&solution.constraints[k], lambdas[k]))
            .collect(),
    };
    if !groups.is_empty() {
        let usable: Vec<&Vec<usize>> = groups.values().filter(|g| g.len() >= 2).collect();
        if usable.is_empty() {
            return Err(Error::InvalidProblem(format!(
                "`{cause}` has fewer than two condition multipliers"
            )));
        }
        let stat = usable
            .iter()
            .map(|g| theta_multi(&g.iter().map(|&k| lambdas[k]).collect::<Vec<_>>()))
            .fold(0.0, f64::max);
        let cited = usable.into_iter().flatten().copied().collect();
        return Ok(decide(Statistic::Theta, stat, cited));
    }
    let mut cited = Vec::new();
    let mut scale = 1.0_f64;
    for (k, c) in solution.constraints.iter().enumerate() {
        if !matches!(c.kind, ConstraintKind::Mean) {
            continue;
        }
        let scope = scope_of(solution, c)?;
        if scope.len() == 2 {
            scale = scale.max(lambdas[k].abs());
            if scope.iter().any(|v| v == cause) && scope.iter().any(|v| v == target) {
                cited.push(k);
            }
        }
    }
    if cited.is_empty() {
        return Err(Error::InvalidProblem(format!("no multiplier relates `{cause}` to `{target}`")));
    }
    let stat = cited.iter().map(|&k| lambdas[k].abs()).fold(0.0, f64::max) / scale;
    Ok(decide(Statistic::ScaledMaxAbsLambda, stat, cited))
}

/// Decisions for every non-target variable the fit has multipliers for, in variable order.
pub fn decide_edges(solution: &MaxEntSolution, t: f64) -> Result<EdgeReport> {
    let target = solution
        .target()
        .ok_or_else(|| Error::WrongMode("edge decisions need a conditional fit".into()))?
        .to_string();
    let mut decisions = Vec::new();
    for name in solution.variables.names() {
        if name == target {
            continue;
        }
        match decide_edge_known_order(solution, name, &target, t) {
            Ok(d) => decisions.push(d),
            Err(Error::InvalidProblem(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(EdgeReport {
        target,
        threshold: t,
        decisions,
    })
}

/// Indicators for every non-reference value and every pair of non-reference
/// values; together with the constant they span all functions of at most two
/// variables. The first domain value is the reference.
pub fn bivariate_basis(vars: &VariableSet) -> Vec<FeatureSpec> {
    let mut out = Vec::new();
    for i in 0..vars.len() {
        let v = vars.get(i);
        for val in &v.domain[1..] {
            out.push(FeatureSpec::indicator(format!("{}={val}", v.name), &[(&v.name, val)]));
        }
    }
    for i in 0..vars.len() {
        for j in i + 1..vars.len() {
            let (a, b) = (vars.get(i), vars.get(j));
            for va in &a.domain[1..] {
                for vb in &b.domain[1..] {
                    out.push(FeatureSpec::indicator(
                        format!("{}={va}&{}={vb}", a.name, b.name),
                        &[(&a.name, va), (&b.name, vb)],
                    ));
                }
            }
        }
    }
    out
}

/// Rank `[1, F]` must have for `F` to span all functions of at most two variables.
pub fn bivariate_basis_rank(vars: &VariableSet) -> usize {
    let d: Vec<usize> = (0..vars.len()).map(|i| vars.domain_size(i) - 1).collect();
    let pairs: usize = (0..d.len())
        .flat_map(|i| (i + 1..d.len()).map(move |j| (i, j)))
        .map(|(i, j)| d[i] * d[j])
        .sum();
    1 + d.iter().sum::<usize>() + pairs
}

/// Undirected graph with an edge wherever a bivariate multiplier is non-zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGraph {
    pub variables: Vec<String>,
    pub zero_threshold: f64,
    pub edges: Vec<CandidateEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEdge {
    pub a: String,
    pub b: String,
    /// The bivariate multipliers above the threshold.
    pub multipliers: Vec<CitedMultiplier>,
}

impl CandidateGraph {
    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.edges.iter().any(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
    }

    /// Edges as sorted index pairs into `variables`.
    pub fn edge_indices(&self) -> std::collections::BTreeSet<(usize, usize)> {
        let pos = |n: &str| self.variables.iter().position(|v| v == n).expect("edge endpoint");
        self.edges
            .iter()
            .map(|e| {
                let (i, j) = (pos(&e.a), pos(&e.b));
                (i.min(j), i.max(j))
            })
            .collect()
    }
}

/// Candidate graph from a joint fit whose features span all univariate and
/// bivariate functions.
pub fn build_candidate_graph(solution: &MaxEntSolution, zero_threshold: f64) -> Result<CandidateGraph> {
    if solution.mode != SolutionMode::Joint {
        return Err(Error::WrongMode("candidate graph needs a joint fit".into()));
    }
    let vars = &solution.variables;
    if let Some(c) = solution.constraints.iter().find(|c| c.condition().is_some()) {
        return Err(Error::InvalidConstraint {
            feature_id: c.feature_id.clone(),
            reason: "candidate graph takes plain moment constraints only".into(),
        });
    }
    if let Some(f) = solution.features.iter().find(|f| f.scope.len() > 2) {
        return Err(Error::InvalidFeature {
            id: f.id.clone(),
            reason: "scope wider than two variables".into(),
        });
    }
    let expected = bivariate_basis_rank(vars);
    let rank = crate::domain::feature_rank(vars, &solution.features, true, solution.config.state_cap)?;
    if rank != expected {
        return Err(Error::RankDeficient { rank, expected });
    }
    let lambdas = solution.lambdas();
    let names: Vec<String> = vars.names().map(str::to_string).collect();
    let mut by_pair: BTreeMap<(usize, usize), Vec<CitedMultiplier>> = BTreeMap::new();
    for (k, c) in solution.constraints.iter().enumerate() {
        let scope = scope_of(solution, c)?;
        if scope.len() == 2 && lambdas[k].abs() > zero_threshold {
            let (i, j) = (vars.index_of(&scope[0])?, vars.index_of(&scope[1])?);
            by_pair
                .entry((i.min(j), i.max(j)))
                .or_default()
                .push(CitedMultiplier::of(c, lambdas[k]));
        }
    }
    let edges = by_pair
        .into_iter()
        .map(|((i, j), multipliers)| CandidateEdge {
            a: names[i].clone(),
            b: names[j].clone(),
            multipliers,
        })
        .collect();
    Ok(CandidateGraph {
        variables: names,
        zero_threshold,
        edges,
    })
}

/// Exact moments of `features` under `p`, as zero-slack constraints.
pub fn exact_constraints(p: &TabularDistribution, features: &[FeatureSpec]) -> Result<ConstraintSet> {
    let mut set = ConstraintSet::new();
    for f in features {
        set.add_feature(f.clone())?;
        set.push(Constraint::mean(&f.id, p.expectation(f)?));
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessEntry {
    pub feature_id: String,
    pub scope: Vec<String>,
    pub lambda: f64,
    pub nonzero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub entries: Vec<FaithfulnessEntry>,
    pub violations: usize,
}

/// Fit `features` to the exact moments of `p` and report, for every feature
/// on a pair of DAG-adjacent variables, whether its multiplier is non-zero.
/// Diagnostic only: zeros are reported, never raised.
pub fn check_faithful_f_expectations(
    p: &TabularDistribution,
    dag: &Dag,
    features: &[FeatureSpec],
) -> Result<FaithfulnessReport> {
    let vars = p.variables();
    let set = exact_constraints(p, features)?;
    let problem = MaxEntProblem::joint(vars.clone(), set).with_config(SolverConfig::strict());
    let sol = fit(&problem)?;
    let skeleton = dag.skeleton();
    let mut entries = Vec::new();
    for (c, m) in sol.constraints.iter().zip(&sol.multipliers) {
        let scope = scope_of(&sol, c)?;
        if scope.len() != 2 {
            continue;
        }
        let (i, j) = (dag.index_of(&scope[0])?, dag.index_of(&scope[1])?);
        if skeleton.contains(&(i.min(j), i.max(j))) {
            entries.push(FaithfulnessEntry {
                feature_id: c.feature_id.clone(),
                scope: scope.to_vec(),
                lambda: m.value,
                nonzero: m.value.abs() > ZERO_THRESHOLD,
            });
        }
    }
    let violations = entries.iter().filter(|e| !e.nonzero).count();
    Ok(FaithfulnessReport { entries, violations })
}

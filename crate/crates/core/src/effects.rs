//! Interventional distributions by backdoor adjustment, and bounds on them
//! from the treatment-target and treatment-confounder marginals alone.

use serde::{Deserialize, Serialize};

use crate::domain::{Assignment, TabularDistribution, VariableSet};
use crate::error::{Error, Result};
use crate::solver::{MaxEntSolution, SolutionMode};

/// Tolerance for the two marginals to agree on `p(x_i)`.
pub const MARGINAL_TOL: f64 = 1e-6;

/// Slack when checking a point value against bounds; covers the accuracy of a strict fit.
pub const BOUNDS_TOL: f64 = 1e-6;

/// `p(target | do(treatment = value))` adjusting for `adjustment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionalQuery {
    pub target: String,
    pub treatment: String,
    pub value: String,
    pub adjustment: Vec<String>,
}

impl InterventionalQuery {
    pub fn new<S: AsRef<str>>(target: &str, treatment: &str, value: &str, adjustment: &[S]) -> Result<Self> {
        let q = InterventionalQuery {
            target: target.to_string(),
            treatment: treatment.to_string(),
            value: value.to_string(),
            adjustment: adjustment.iter().map(|s| s.as_ref().to_string()).collect(),
        };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<()> {
        if self.target == self.treatment {
            return Err(Error::InvalidConfig("treatment and target coincide".into()));
        }
        if let Some(z) = self.adjustment.iter().find(|z| **z == self.target || **z == self.treatment) {
            return Err(Error::InvalidConfig(format!(
                "adjustment set contains `{z}`, which is the treatment or the target"
            )));
        }
        Ok(())
    }

    fn with_value(&self, value: &str) -> Self {
        InterventionalQuery {
            value: value.to_string(),
            ..self.clone()
        }
    }
}

fn binary_check(vars: &VariableSet, name: &str) -> Result<()> {
    let i = vars.index_of(name)?;
    if vars.domain_size(i) != 2 {
        return Err(Error::NonBinary(name.to_string()));
    }
    Ok(())
}

/// Backdoor adjustment `sum_z p(x_j | x_i', z) p(z)` on an explicit joint.
///
/// Returns a distribution over the target's domain. Fails with
/// [`Error::Positivity`] naming the first `z` with `p(z) > 0` but `p(x_i', z) = 0`.
pub fn do_distribution(p: &TabularDistribution, q: &InterventionalQuery) -> Result<Vec<f64>> {
    q.validate()?;
    let mut scope = vec![q.treatment.as_str(), q.target.as_str()];
    scope.extend(q.adjustment.iter().map(String::as_str));
    let m = p.marginalize(&scope)?;
    let vars = m.variables();
    let xi = vars
        .get(0)
        .value_index(&q.value)
        .ok_or_else(|| Error::InvalidAssignment(format!("`{}` is not a value of `{}`", q.value, q.treatment)))?;
    let (di, dj) = (vars.domain_size(0), vars.domain_size(1));
    let zvars = vars.subset(&q.adjustment)?;
    let nz = zvars.state_count(usize::MAX)?;
    // probs layout: treatment slowest, then target, then z
    let cell = |i: usize, j: usize, z: usize| m.probs()[(i * dj + j) * nz + z];
    let mut out = vec![0.0; dj];
    for z in 0..nz {
        let pz: f64 = (0..di).flat_map(|i| (0..dj).map(move |j| (i, j))).map(|(i, j)| cell(i, j, z)).sum();
        if pz <= 0.0 {
            continue;
        }
        let pxz: f64 = (0..dj).map(|j| cell(xi, j, z)).sum();
        if pxz <= 0.0 {
            return Err(Error::Positivity {
                treatment: format!("{}={}", q.treatment, q.value),
                cell: if q.adjustment.is_empty() {
                    "(empty adjustment set)".into()
                } else {
                    Assignment::from_state(&zvars, &zvars.state_at(z)).to_string()
                },
            });
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o += cell(xi, j, z) / pxz * pz;
        }
    }
    let total: f64 = out.iter().sum();
    Ok(out.into_iter().map(|x| x / total).collect())
}

/// Backdoor adjustment on a fitted model.
///
/// For a causal-order fit of the target adjusting for every other cause, the
/// model's own conditional is used, so cells the data never shows with the
/// treatment value still get the model's prediction. Otherwise the fitted
/// joint is adjusted like any explicit distribution.
pub fn do_distribution_from_solution(sol: &MaxEntSolution, q: &InterventionalQuery) -> Result<Vec<f64>> {
    q.validate()?;
    let model_path = match &sol.mode {
        SolutionMode::Conditional { target, .. } if *target == q.target => {
            let others = sol.variables.len() - 2;
            others == q.adjustment.len()
                && sol.variables.names().all(|n| n == q.target || n == q.treatment || q.adjustment.iter().any(|z| z == n))
        }
        _ => false,
    };
    if !model_path {
        return do_distribution(&sol.joint()?, q);
    }
    let table = sol.conditional_table()?;
    let cause = sol
        .cause_marginal
        .as_ref()
        .ok_or_else(|| Error::InvalidProblem("conditional solution without a cause marginal".into()))?;
    let cvars = cause.variables();
    let ti = cvars.index_of(&q.treatment)?;
    let xi = cvars
        .get(ti)
        .value_index(&q.value)
        .ok_or_else(|| Error::InvalidAssignment(format!("`{}` is not a value of `{}`", q.value, q.treatment)))?;
    let dj = table.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dj];
    // p(z) sums the cause marginal over the treatment; the model supplies p(x_j | x_i', z)
    for (c, (state, _)) in cause.iter().enumerate() {
        if state[ti] != xi {
            continue;
        }
        let pz: f64 = (0..cvars.domain_size(ti))
            .map(|v| {
                let mut s = state.clone();
                s[ti] = v;
                cause.prob(&s)
            })
            .sum();
        for (o, q) in out.iter_mut().zip(&table[c]) {
            *o += q * pz;
        }
    }
    Ok(out)
}

fn target_one(vars: &VariableSet, target: &str) -> Result<usize> {
    binary_check(vars, target)?;
    Ok(1)
}

/// `p(x_j = v1 | do(x_i = v1)) - p(x_j = v1 | do(x_i = v0))` for binary
/// treatment and target, where `v0, v1` are the first and second domain values.
pub fn ace<S: AsRef<str>>(p: &TabularDistribution, treatment: &str, target: &str, adjustment: &[S]) -> Result<f64> {
    let vars = p.variables();
    binary_check(vars, treatment)?;
    let one = target_one(vars, target)?;
    let dom = &vars.get(vars.index_of(treatment)?).domain;
    let q = InterventionalQuery::new(target, treatment, &dom[1], adjustment)?;
    let d1 = do_distribution(p, &q)?;
    let d0 = do_distribution(p, &q.with_value(&dom[0]))?;
    Ok(d1[one] - d0[one])
}

/// ACE computed on a fitted model, see [`do_distribution_from_solution`].
pub fn ace_from_solution<S: AsRef<str>>(sol: &MaxEntSolution, treatment: &str, target: &str, adjustment: &[S]) -> Result<f64> {
    let vars = &sol.variables;
    binary_check(vars, treatment)?;
    let one = target_one(vars, target)?;
    let dom = &vars.get(vars.index_of(treatment)?).domain;
    let q = InterventionalQuery::new(target, treatment, &dom[1], adjustment)?;
    let d1 = do_distribution_from_solution(sol, &q)?;
    let d0 = do_distribution_from_solution(sol, &q.with_value(&dom[0]))?;
    Ok(d1[one] - d0[one])
}

/// Bounds on one interventional probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionalBounds {
    pub lower: f64,
    pub upper: f64,
    /// `min_z p(x_i' | z) = 0`, or the raw upper bound exceeded 1; the upper bound is then 1.
    pub upper_capped: bool,
    /// `p(x_i') = 0`, so the lower bound is vacuous (0).
    pub lower_vacuous: bool,
}

struct Marginals {
    /// `p(x_i, x_j)` as `[x_i][x_j]`.
    pij: Vec<Vec<f64>>,
    /// `p(x_i | z)` as `[z][x_i]`, for cells with `p(z) > 0`.
    pi_given_z: Vec<Vec<f64>>,
    treatment_domain: Vec<String>,
    target_domain: Vec<String>,
}

fn prepare(p_xixj: &TabularDistribution, p_xiz: &TabularDistribution, treatment: &str, target: &str) -> Result<Marginals> {
    let pij_t = p_xixj.marginalize(&[treatment, target])?;
    if p_xixj.variables().len() != 2 {
        return Err(Error::InvalidDistribution(
            "treatment-target marginal must be over exactly the treatment and the target".into(),
        ));
    }
    let zs: Vec<String> = p_xiz.variables().names().filter(|n| *n != treatment).map(str::to_string).collect();
    if zs.len() + 1 != p_xiz.variables().len() {
        return Err(Error::UnknownVariable(treatment.to_string()));
    }
    if zs.iter().any(|z| z == target) {
        return Err(Error::InvalidConfig("treatment-confounder marginal contains the target".into()));
    }
    let mut scope = vec![treatment.to_string()];
    scope.extend(zs.iter().cloned());
    let piz = p_xiz.marginalize(&scope)?;
    let vij = pij_t.variables();
    if vij.get(0) != piz.variables().get(0) {
        return Err(Error::InvalidDistribution(format!(
            "`{treatment}` has different domains in the two marginals"
        )));
    }
    let (di, dj) = (vij.domain_size(0), vij.domain_size(1));
    let pij: Vec<Vec<f64>> = (0..di).map(|i| (0..dj).map(|j| pij_t.probs()[i * dj + j]).collect()).collect();
    let nz = piz.probs().len() / di;
    let mut pi_from_z = vec![0.0; di];
    let mut pi_given_z = Vec::new();
    for z in 0..nz {
        let col: Vec<f64> = (0..di).map(|i| piz.probs()[i * nz + z]).collect();
        let pz: f64 = col.iter().sum();
        for (acc, c) in pi_from_z.iter_mut().zip(&col) {
            *acc += c;
        }
        if pz > 0.0 {
            pi_given_z.push(col.iter().map(|c| c / pz).collect());
        }
    }
    for i in 0..di {
        let from_ij: f64 = pij[i].iter().sum();
        let diff = (from_ij - pi_from_z[i]).abs();
        if diff > MARGINAL_TOL {
            return Err(Error::InconsistentMarginals {
                variable: format!("{treatment}={}", vij.get(0).domain[i]),
                diff,
            });
        }
    }
    Ok(Marginals {
        pij,
        pi_given_z,
        treatment_domain: vij.get(0).domain.clone(),
        target_domain: vij.get(1).domain.clone(),
    })
}

fn bounds_at(m: &Marginals, xi: usize, xj: usize) -> InterventionalBounds {
    let joint = m.pij[xi][xj];
    let (lo_c, hi_c) = m
        .pi_given_z
        .iter()
        .map(|r| r[xi])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (lower, lower_vacuous) = if hi_c > 0.0 { (joint / hi_c, false) } else { (0.0, true) };
    let raw_upper = if lo_c > 0.0 { joint / lo_c } else { f64::INFINITY };
    let upper_capped = raw_upper > 1.0;
    InterventionalBounds {
        lower: lower.min(1.0),
        upper: raw_upper.min(1.0),
        upper_capped,
        lower_vacuous,
    }
}

/// Bounds on `p(x_j | do(x_i = x_i'))` from `p(x_i, x_j)` and `p(x_i, z)`.
///
/// `p_xiz` may hold several confounders; its cells are their joint states.
pub fn interventional_bounds(
    p_xixj: &TabularDistribution,
    p_xiz: &TabularDistribution,
    treatment: &str,
    value: &str,
    target: &str,
    target_value: &str,
) -> Result<InterventionalBounds> {
    let m = prepare(p_xixj, p_xiz, treatment, target)?;
    let xi = m
        .treatment_domain
        .iter()
        .position(|v| v == value)
        .ok_or_else(|| Error::InvalidAssignment(format!("`{value}` is not a value of `{treatment}`")))?;
    let xj = m
        .target_domain
        .iter()
        .position(|v| v == target_value)
        .ok_or_else(|| Error::InvalidAssignment(format!("`{target_value}` is not a value of `{target}`")))?;
    Ok(bounds_at(&m, xi, xj))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegenerateFlags {
    /// An interventional upper bound was capped at 1.
    pub upper_capped: bool,
    /// A treatment value never occurs, so its lower bound is vacuous.
    pub lower_vacuous: bool,
}

/// Bounds on the ACE of a binary treatment on a binary target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AceBounds {
    pub lower: f64,
    pub upper: f64,
    pub point_estimate: Option<f64>,
    /// Whether `point_estimate` lies in `[lower, upper]` (with [`BOUNDS_TOL`] slack).
    pub within_bounds: Option<bool>,
    pub degenerate: DegenerateFlags,
}

impl AceBounds {
    pub fn with_point(mut self, point: f64) -> Self {
        self.point_estimate = Some(point);
        self.within_bounds = Some(self.contains(point));
        self
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower - BOUNDS_TOL && x <= self.upper + BOUNDS_TOL
    }
}

pub fn ace_bounds(p_xixj: &TabularDistribution, p_xiz: &TabularDistribution, treatment: &str, target: &str) -> Result<AceBounds> {
    let m = prepare(p_xixj, p_xiz, treatment, target)?;
    if m.treatment_domain.len() != 2 {
        return Err(Error::NonBinary(treatment.to_string()));
    }
    if m.target_domain.len() != 2 {
        return Err(Error::NonBinary(target.to_string()));
    }
    let b1 = bounds_at(&m, 1, 1);
    let b0 = bounds_at(&m, 0, 1);
    Ok(AceBounds {
        lower: b1.lower - b0.upper,
        upper: b1.upper - b0.lower,
        point_estimate: None,
        within_bounds: None,
        degenerate: DegenerateFlags {
            upper_capped: b1.upper_capped || b0.upper_capped,
            lower_vacuous: b1.lower_vacuous || b0.lower_vacuous,
        },
    })
}

//! Approximate maximum-entropy fitting through the L1-regularized dual.

mod design;
mod optimize;
mod problem;
mod solution;

pub use problem::{CauseMarginal, MaxEntProblem, Objective, ProblemMode, SolverConfig};
pub use solution::{
    BetaEntry, LogPartition, MarginalSource, MaxEntSolution, Multiplier, SolutionMode, SOLUTION_FORMAT,
};

use design::{Design, Eval, Scale};
use optimize::{kkt_violation, optimize};

use crate::domain::{Assignment, ConstraintSet, TabularDistribution, VariableSet};
use crate::error::{Error, Result};

/// A problem compiled against its cause marginal.
struct Compiled {
    variables: VariableSet,
    constraints: ConstraintSet,
    design: Design,
    cause: Option<(TabularDistribution, MarginalSource, Option<Box<MaxEntSolution>>)>,
    target: Option<String>,
}

fn referenced(set: &ConstraintSet, constraints: Vec<crate::domain::Constraint>) -> ConstraintSet {
    let features = set
        .features
        .iter()
        .filter(|f| constraints.iter().any(|c| c.feature_id == f.id))
        .cloned()
        .collect();
    ConstraintSet { features, constraints }
}

fn compile(problem: &MaxEntProblem) -> Result<Compiled> {
    let vars = &problem.variables;
    let cap = problem.config.state_cap;
    vars.state_count(cap)?;
    problem.constraints.validate(vars)?;
    match &problem.mode {
        ProblemMode::Joint => {
            let constraints = problem.constraints.clone();
            let design = Design::joint(vars, &constraints, cap)?;
            Ok(Compiled {
                variables: vars.clone(),
                constraints,
                design,
                cause: None,
                target: None,
            })
        }
        ProblemMode::Conditional { target, cause_marginal } => {
            let j = vars.index_of(target)?;
            let cause_vars = vars.without(target)?;
            let mut own = Vec::new();
            let mut cause_only = Vec::new();
            for c in &problem.constraints.constraints {
                if c.condition().is_some_and(|a| a.get(target).is_some()) {
                    return Err(Error::InvalidConstraint {
                        feature_id: c.feature_id.clone(),
                        reason: format!("conditions on the target `{target}`"),
                    });
                }
                let scope = problem.constraints.full_scope(c)?;
                if scope.iter().any(|v| v == target) {
                    own.push(c.clone());
                } else {
                    cause_only.push(c.clone());
                }
            }
            let (cause, source, cause_fit) = match cause_marginal {
                CauseMarginal::Known(dist) => {
                    if let Some(c) = cause_only.first() {
                        return Err(Error::InvalidConstraint {
                            feature_id: c.feature_id.clone(),
                            reason: "does not involve the target; with a known cause marginal it has no effect".into(),
                        });
                    }
                    let names: Vec<&str> = cause_vars.names().collect();
                    if dist.variables().len() != names.len() {
                        return Err(Error::InvalidDistribution(format!(
                            "cause marginal must cover exactly {names:?}"
                        )));
                    }
                    let reordered = dist.marginalize(&names)?;
                    if *reordered.variables() != cause_vars {
                        return Err(Error::InvalidDistribution(
                            "cause marginal domains differ from the problem's variables".into(),
                        ));
                    }
                    (reordered, MarginalSource::Known, None)
                }
                CauseMarginal::Estimated => {
                    let sub = MaxEntProblem {
                        variables: cause_vars.clone(),
                        constraints: referenced(&problem.constraints, cause_only),
                        mode: ProblemMode::Joint,
                        config: problem.config.clone(),
                        seed: problem.seed,
                    };
                    let sol = fit(&sub)?;
                    (sol.joint()?, MarginalSource::Estimated, Some(Box::new(sol)))
                }
            };
            let constraints = referenced(&problem.constraints, own);
            let design = Design::conditional(vars, &constraints, j, &cause, cap)?;
            Ok(Compiled {
                variables: vars.clone(),
                constraints,
                design,
                cause: Some((cause, source, cause_fit)),
                target: Some(target.clone()),
            })
        }
    }
}

/// Reject targets no distribution can reach, even with the slack.
fn check_feasible(compiled: &Compiled) -> Result<()> {
    let design = &compiled.design;
    let ranges = design.moment_ranges();
    for (j, c) in compiled.constraints.constraints.iter().enumerate() {
        // a joint model can put all mass anywhere, and feature scopes never
        // overlap their conditions, so the feature's own range is attainable
        let (lo, hi) = if compiled.target.is_none() {
            let spec = compiled.constraints.feature(&c.feature_id).expect("validated");
            spec.resolve(&compiled.variables)?.range(&compiled.variables)
        } else if let Scale::Fixed(p) = design.scales[j] {
            (ranges[j].0 / p, ranges[j].1 / p)
        } else {
            ranges[j]
        };
        let pad = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if c.target < lo - c.slack - pad || c.target > hi + c.slack + pad {
            return Err(Error::InfeasibleTarget {
                feature_id: c.feature_id.clone(),
                condition: c.condition().map(|a| a.to_string()),
                target: c.target,
                min: lo,
                max: hi,
            });
        }
    }
    Ok(())
}

fn dual_value(design: &Design, lambda: &[f64], eval: &Eval) -> f64 {
    eval.smooth + lambda.iter().zip(&design.slacks).map(|(l, e)| e * l.abs()).sum::<f64>()
}

fn assemble(problem: &MaxEntProblem, compiled: Compiled, lambda: Vec<f64>, eval: Eval, iterations: usize, converged: bool) -> MaxEntSolution {
    let design = &compiled.design;
    let residuals = (0..design.k)
        .map(|j| (eval.moments[j] - design.targets[j]).abs() / design.unit(j, &eval.aux).max(f64::MIN_POSITIVE))
        .collect();
    let multipliers = compiled
        .constraints
        .constraints
        .iter()
        .zip(&lambda)
        .map(|(c, &value)| Multiplier {
            feature_id: c.feature_id.clone(),
            condition: c.condition().cloned(),
            value,
        })
        .collect();
    let dual_objective = dual_value(design, &lambda, &eval);
    let (mode, log_partition, cause_marginal, cause_fit) = match compiled.cause {
        None => (SolutionMode::Joint, LogPartition::Joint { alpha: eval.log_z[0] }, None, None),
        Some((cause, source, fit)) => {
            let beta = cause
                .iter()
                .zip(&eval.log_z)
                .map(|((s, _), &value)| BetaEntry {
                    condition: Assignment::from_state(cause.variables(), &s),
                    value,
                })
                .collect();
            (
                SolutionMode::Conditional {
                    target: compiled.target.clone().expect("conditional target"),
                    cause_marginal: source,
                },
                LogPartition::Conditional { beta },
                Some(cause),
                fit,
            )
        }
    };
    MaxEntSolution {
        format: SOLUTION_FORMAT.to_string(),
        variables: compiled.variables,
        mode,
        features: compiled.constraints.features,
        constraints: compiled.constraints.constraints,
        multipliers,
        log_partition,
        residuals,
        dual_objective,
        converged,
        iterations,
        config: problem.config.clone(),
        seed: problem.seed,
        cause_marginal,
        cause_fit,
    }
}

/// Fit the problem. A run that stops short of the tolerance returns
/// [`Error::NotConverged`] carrying the partial solution for diagnostics.
pub fn fit(problem: &MaxEntProblem) -> Result<MaxEntSolution> {
    if !(problem.config.tolerance > 0.0) {
        return Err(Error::InvalidConfig("tolerance must be positive".into()));
    }
    let compiled = compile(problem)?;
    check_feasible(&compiled)?;
    let out = optimize(&compiled.design, &problem.config)?;
    let solution = assemble(problem, compiled, out.lambda, out.eval, out.iterations, out.converged);
    if solution.converged {
        Ok(solution)
    } else {
        Err(Error::NotConverged(Box::new(solution)))
    }
}

/// The L1-regularized dual at `lambda` (one value per constraint).
pub fn dual_objective(problem: &MaxEntProblem, lambda: &[f64]) -> Result<f64> {
    let compiled = compile(problem)?;
    check_len(&compiled.design, lambda)?;
    let eval = compiled.design.evaluate(lambda, false)?;
    Ok(dual_value(&compiled.design, lambda, &eval))
}

/// Gradient of the smooth part plus `slack * sign(lambda)` (zero at zero).
pub fn dual_gradient(problem: &MaxEntProblem, lambda: &[f64]) -> Result<Vec<f64>> {
    let compiled = compile(problem)?;
    let design = &compiled.design;
    check_len(design, lambda)?;
    let eval = design.evaluate(lambda, false)?;
    Ok((0..design.k)
        .map(|j| {
            let sign = if lambda[j] == 0.0 { 0.0 } else { lambda[j].signum() };
            eval.moments[j] - design.targets[j] + design.slacks[j] * sign
        })
        .collect())
}

/// Normalizer of the model at `lambda`: `alpha` in joint mode, `beta` per cause cell otherwise.
pub fn log_partition(problem: &MaxEntProblem, lambda: &[f64]) -> Result<LogPartition> {
    let compiled = compile(problem)?;
    check_len(&compiled.design, lambda)?;
    let eval = compiled.design.evaluate(lambda, false)?;
    Ok(match &compiled.cause {
        None => LogPartition::Joint { alpha: eval.log_z[0] },
        Some((cause, _, _)) => LogPartition::Conditional {
            beta: cause
                .iter()
                .zip(&eval.log_z)
                .map(|((s, _), &value)| BetaEntry {
                    condition: Assignment::from_state(cause.variables(), &s),
                    value,
                })
                .collect(),
        },
    })
}

/// Largest optimality violation of `lambda`, in constraint units.
pub fn optimality_gap(problem: &MaxEntProblem, lambda: &[f64]) -> Result<f64> {
    let compiled = compile(problem)?;
    check_len(&compiled.design, lambda)?;
    let eval = compiled.design.evaluate(lambda, false)?;
    Ok(kkt_violation(&compiled.design, lambda, &eval))
}

fn check_len(design: &Design, lambda: &[f64]) -> Result<()> {
    if lambda.len() != design.k {
        return Err(Error::InvalidProblem(format!(
            "{} multipliers for {} constraints",
            lambda.len(),
            design.k
        )));
    }
    Ok(())
}

pub fn query_prob(solution: &MaxEntSolution, x: &Assignment) -> Result<f64> {
    solution.prob(x)
}

pub fn query_conditional(solution: &MaxEntSolution, x: &Assignment) -> Result<f64> {
    solution.conditional_prob(x)
}

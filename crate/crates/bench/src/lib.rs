//! Fixed problems for the benchmarks, built from seeded synthetic instances.

use maxent_merge::causal::{bivariate_basis, exact_constraints};
use maxent_merge::simulate::{draw_instance, Family, ScmInstance, NO_FORCING};
use maxent_merge::{MaxEntProblem, Result, SolverConfig};

pub fn instance(family: Family) -> ScmInstance {
    draw_instance(family, 7, &NO_FORCING)
}

/// Joint fit of every univariate and pairwise indicator moment of an instance's exact joint.
pub fn basis_problem(family: Family) -> Result<MaxEntProblem> {
    let p = instance(family).exact_joint();
    let set = exact_constraints(&p, &bivariate_basis(p.variables()))?;
    Ok(MaxEntProblem::joint(p.variables().clone(), set).with_config(SolverConfig::strict()))
}

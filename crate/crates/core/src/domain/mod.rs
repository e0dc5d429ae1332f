//! Variables, assignments, features, constraints and explicit distributions.

mod constraint;
mod distribution;
mod feature;
mod sample;
mod variables;

pub use constraint::{Constraint, ConstraintKind, ConstraintSet};
pub use distribution::TabularDistribution;
pub use feature::{check_linear_independence, evaluate_feature, feature_rank, FeatureKind, FeatureSpec, ResolvedFeature};
pub use sample::{empirical_moments, Conditioning, EmptyCellPolicy, SampleTable};
pub use variables::{enumerate_states, Assignment, StateIter, Variable, VariableSet, DEFAULT_STATE_CAP};

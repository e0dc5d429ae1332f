//! Reading causal structure off fitted multipliers.

mod edges;
mod graph;
mod theta;

pub use edges::{
    bivariate_basis, bivariate_basis_rank, build_candidate_graph, check_faithful_f_expectations,
    decide_edge_known_order, decide_edges, exact_constraints, CandidateEdge, CandidateGraph, CitedMultiplier,
    EdgeDecision, EdgeReport, FaithfulnessEntry, FaithfulnessReport, Statistic, Verdict, ZERO_THRESHOLD,
};
pub use graph::Dag;
pub use theta::{theta, theta_multi};

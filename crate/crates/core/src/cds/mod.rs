//! Dominant sets and constrained dominant sets.

mod dominant;
mod extract;
mod replicator;

pub use dominant::{
    brute_force_maximal_cliques, is_dominant_set, node_weight, phi, total_weight, weighted_characteristic_vector,
    MAX_CLIQUE_GRAPH, MAX_ORACLE_SET,
};
pub(crate) use extract::complement;
pub use extract::{
    alpha_bound, cds_matrix, check_constraints, extract_cds, extract_cds_all, peel_off_extract, resolve_alpha,
    PeelOffResult,
};
pub use replicator::{
    kkt_residual, kkt_residual_with_cutoff, payoff, run_multi_start, run_replicator, start_vectors, support_of,
    AlphaMode, ClusterResult, ReplicatorDynamics, ShiftMode, SimplexSolver, SolverParams, StartMode, SIMPLEX_TOL,
};

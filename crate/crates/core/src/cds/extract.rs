//! Constrained extraction: spectral alpha bound, CDS matrix, single and peel-off extraction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::replicator::{run_multi_start, run_replicator, AlphaMode, ClusterResult, SolverParams};
use crate::error::{invalid, CdsError, Result};
use crate::graph::{principal_submatrix, AffinityMatrix};
use crate::linalg::lambda_max;

/// Disjoint clusters extracted one after another until every constraint vertex is covered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeelOffResult {
    pub clusters: Vec<ClusterResult>,
    pub union_support: Vec<usize>,
}

/// Sorted, duplicate-free constraint set checked against the graph size.
pub fn check_constraints(n: usize, s: &[usize]) -> Result<Vec<usize>> {
    let mut v = s.to_vec();
    v.sort_unstable();
    if let Some(&index) = v.iter().find(|&&i| i >= n) {
        return Err(CdsError::VertexOutOfRange { index, n });
    }
    if let Some(w) = v.windows(2).find(|w| w[0] == w[1]) {
        return Err(CdsError::DuplicateVertex(w[0]));
    }
    Ok(v)
}

/// `lambda_max(A_{V\S})`; zero when `S = V`.
pub fn alpha_bound(a: &AffinityMatrix, s: &[usize]) -> Result<f64> {
    let s = check_constraints(a.n(), s)?;
    if s.is_empty() {
        return Err(invalid("constraints", "alpha bound needs a nonempty set"));
    }
    let rest = complement(a.n(), &s);
    Ok(lambda_max(&principal_submatrix(a.matrix(), &rest)))
}

/// The alpha used by [`extract_cds`].
///
/// In automatic mode this is `(1 + margin)` times the bound. When the bound is zero the
/// remaining vertices carry no edges and any positive alpha satisfies it, so half the largest
/// edge weight (or one on an empty graph) is used. With no constraints the program is the
/// regularised dominant-set problem `x'(A + max(A)/2 I)x`, i.e. alpha is `-max(A)/2`.
pub fn resolve_alpha(a: &AffinityMatrix, s: &[usize], params: &SolverParams) -> Result<f64> {
    match params.alpha {
        AlphaMode::Explicit(v) => Ok(v),
        AlphaMode::Auto if s.is_empty() => Ok(-0.5 * a.max_weight()),
        AlphaMode::Auto => {
            let bound = alpha_bound(a, s)?;
            if bound > 0.0 {
                Ok((1.0 + params.margin) * bound)
            } else {
                let amax = a.max_weight();
                Ok(if amax > 0.0 { 0.5 * amax } else { 1.0 })
            }
        }
    }
}

/// `W = A - alpha * I_S`, where `I_S` has ones on the diagonal outside `S`.
pub fn cds_matrix(a: &AffinityMatrix, s: &[usize], alpha: f64) -> DMatrix<f64> {
    let mut w = a.matrix().clone();
    for i in complement(a.n(), s) {
        w[(i, i)] -= alpha;
    }
    w
}

/// Solves the constrained program for `S`. An empty `S` runs the unconstrained regularised
/// program instead.
pub fn extract_cds(a: &AffinityMatrix, s: &[usize], params: &SolverParams) -> Result<ClusterResult> {
    let s = check_constraints(a.n(), s)?;
    let alpha = resolve_alpha(a, &s, params)?;
    run_replicator(&cds_matrix(a, &s, alpha), params)
}

/// Like [`extract_cds`] but returns one result per distinct support found by the starts.
pub fn extract_cds_all(a: &AffinityMatrix, s: &[usize], params: &SolverParams) -> Result<Vec<ClusterResult>> {
    let s = check_constraints(a.n(), s)?;
    let alpha = resolve_alpha(a, &s, params)?;
    run_multi_start(&cds_matrix(a, &s, alpha), params)
}

/// Repeatedly extracts a constrained cluster on the remaining graph and deletes it, until every
/// vertex of `S` has been assigned. Alpha is re-derived on each reduced graph.
pub fn peel_off_extract(a: &AffinityMatrix, s: &[usize], params: &SolverParams) -> Result<PeelOffResult> {
    let s = check_constraints(a.n(), s)?;
    if s.is_empty() {
        return Err(invalid("constraints", "peel-off needs a nonempty set"));
    }
    let n = a.n();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut pending = s;
    let mut clusters = Vec::new();
    while !pending.is_empty() {
        let sub = a.principal_submatrix(&remaining);
        let local: Vec<usize> = pending
            .iter()
            .map(|v| remaining.binary_search(v).expect("pending vertices remain"))
            .collect();
        let r = extract_cds(&sub, &local, params)?;
        let mut cluster = lift(r, &remaining, n);
        if !cluster.support.iter().any(|v| pending.binary_search(v).is_ok()) {
            cluster = singleton(pending[0], n);
        }
        pending.retain(|v| !cluster.contains(*v));
        remaining.retain(|v| !cluster.contains(*v));
        clusters.push(cluster);
    }
    let mut union_support: Vec<usize> = clusters.iter().flat_map(|c| c.support.clone()).collect();
    union_support.sort_unstable();
    Ok(PeelOffResult {
        clusters,
        union_support,
    })
}

pub(crate) fn complement(n: usize, s: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| !s.contains(i)).collect()
}

/// Maps a result on the subgraph `idx` back to `n` global vertices.
pub(crate) fn lift(r: ClusterResult, idx: &[usize], n: usize) -> ClusterResult {
    let mut x = vec![0.0; n];
    for (k, &g) in idx.iter().enumerate() {
        x[g] = r.x[k];
    }
    ClusterResult {
        x,
        support: r.support.iter().map(|&k| idx[k]).collect(),
        ..r
    }
}

fn singleton(v: usize, n: usize) -> ClusterResult {
    let mut x = vec![0.0; n];
    x[v] = 1.0;
    ClusterResult {
        x,
        support: vec![v],
        payoff: 0.0,
        kkt_residual: 0.0,
        iterations: 0,
        converged: true,
        polished: false,
        trace: vec![0.0],
    }
}

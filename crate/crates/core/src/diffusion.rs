//! Locally constrained diffusion for retrieval re-ranking.
//!
//! A sparse transition `L` is built from the affinity graph, then an initial affinity `V` is
//! propagated with `V <- L V L` and row-normalized after every step.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cds::{extract_cds, SolverParams};
use crate::error::{invalid, CdsError, Result};
use crate::graph::AffinityMatrix;
pub use crate::metrics::{bulls_eye, mean_bulls_eye, RankedList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitScheme {
    /// `V0 = A`.
    A1Affinity,
    /// `V0 = I`.
    A2Identity,
    /// `V0 = P`, the row-normalized affinity.
    A3Transition,
    /// `V0` is the row-normalized k-NN sparsified affinity.
    A4KnnTransition,
}

impl InitScheme {
    pub const ALL: [InitScheme; 4] = [
        Self::A1Affinity,
        Self::A2Identity,
        Self::A3Transition,
        Self::A4KnnTransition,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionScheme {
    /// Row-normalized affinity.
    B1Transition,
    /// Personalized-PageRank style mix of `P` with a uniform jump over each node's neighbors.
    B2Ppr,
    /// k nearest neighbors of every node.
    B3Knn,
    /// Constrained dominant set of each node inside its k-NN neighborhood.
    B4DominantNeighbors,
    /// The affinity itself.
    B5Affinity,
    /// Constrained dominant set of each node on the full graph.
    B6Cds,
}

impl TransitionScheme {
    pub const ALL: [TransitionScheme; 6] = [
        Self::B1Transition,
        Self::B2Ppr,
        Self::B3Knn,
        Self::B4DominantNeighbors,
        Self::B5Affinity,
        Self::B6Cds,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub iterations: usize,
    pub init: InitScheme,
    pub transition: TransitionScheme,
    /// Neighborhood size for the k-NN schemes and the fallback rows.
    pub k: usize,
    /// Weight of the transition term in `B2Ppr`.
    pub teleport: f64,
    pub solver: SolverParams,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            init: InitScheme::A1Affinity,
            transition: TransitionScheme::B6Cds,
            k: 10,
            teleport: 0.85,
            solver: SolverParams::default(),
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(invalid("iterations", "must be at least 1"));
        }
        if self.k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.teleport) {
            return Err(invalid("teleport", "must lie in [0, 1]"));
        }
        self.solver.validate()
    }
}

/// Row-normalized affinity. Rows without edges stay zero.
pub fn transition_matrix(a: &AffinityMatrix) -> DMatrix<f64> {
    row_normalized(a.matrix().clone())
}

/// The `k` strongest neighbors of `i`, ties broken by index. Zero-weight vertices are skipped.
pub fn knn_indices(a: &AffinityMatrix, i: usize, k: usize) -> Vec<usize> {
    let mut nb: Vec<usize> = (0..a.n()).filter(|&j| j != i && a.get(i, j) > 0.0).collect();
    nb.sort_by(|&x, &y| a.get(i, y).total_cmp(&a.get(i, x)).then(x.cmp(&y)));
    nb.truncate(k);
    nb
}

/// Affinity restricted to each row's k nearest neighbors (not symmetrized).
pub fn knn_rows(a: &AffinityMatrix, k: usize) -> DMatrix<f64> {
    let n = a.n();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in knn_indices(a, i, k) {
            m[(i, j)] = a.get(i, j);
        }
    }
    m
}

/// Initial affinity `V0` for the chosen scheme.
pub fn initial_affinity(a: &AffinityMatrix, scheme: InitScheme, k: usize) -> DMatrix<f64> {
    match scheme {
        InitScheme::A1Affinity => a.matrix().clone(),
        InitScheme::A2Identity => DMatrix::identity(a.n(), a.n()),
        InitScheme::A3Transition => transition_matrix(a),
        InitScheme::A4KnnTransition => row_normalized(knn_rows(a, k)),
    }
}

/// Builds the transition `L`. Every scheme keeps only edges of `A`, so `nnz(L) <= nnz(A)`.
///
/// The k-NN and dominant-set schemes keep raw weights and are symmetrized with `max(L, L')`.
/// A node whose constrained extraction fails falls back to its k-NN row.
pub fn build_locally_constrained_affinity(
    a: &AffinityMatrix,
    scheme: TransitionScheme,
    config: &DiffusionConfig,
) -> Result<DMatrix<f64>> {
    config.validate()?;
    let n = a.n();
    let l = match scheme {
        TransitionScheme::B1Transition => return Ok(transition_matrix(a)),
        TransitionScheme::B5Affinity => return Ok(a.matrix().clone()),
        TransitionScheme::B2Ppr => {
            let p = transition_matrix(a);
            let t = config.teleport;
            DMatrix::from_fn(n, n, |i, j| {
                if a.get(i, j) > 0.0 {
                    let deg = (0..n).filter(|&m| a.get(i, m) > 0.0).count() as f64;
                    t * p[(i, j)] + (1.0 - t) / deg
                } else {
                    0.0
                }
            })
        }
        TransitionScheme::B3Knn => symmetrize_max(knn_rows(a, config.k)),
        TransitionScheme::B4DominantNeighbors | TransitionScheme::B6Cds => {
            let rows: Vec<Vec<usize>> = (0..n)
                .into_par_iter()
                .map(|q| {
                    let members = if scheme == TransitionScheme::B6Cds {
                        extract_cds(a, &[q], &config.solver).map(|r| r.support)
                    } else {
                        neighborhood_cds(a, q, config)
                    };
                    members.unwrap_or_else(|_| knn_indices(a, q, config.k))
                })
                .collect();
            let mut m = DMatrix::zeros(n, n);
            for (q, keep) in rows.iter().enumerate() {
                for &j in keep {
                    if j != q {
                        m[(q, j)] = a.get(q, j);
                    }
                }
            }
            symmetrize_max(m)
        }
    };
    Ok(l)
}

fn neighborhood_cds(a: &AffinityMatrix, q: usize, config: &DiffusionConfig) -> Result<Vec<usize>> {
    let mut idx = knn_indices(a, q, config.k);
    idx.push(q);
    idx.sort_unstable();
    let local = idx.binary_search(&q).expect("query is in its neighborhood");
    let r = extract_cds(&a.principal_submatrix(&idx), &[local], &config.solver)?;
    Ok(r.support.iter().map(|&s| idx[s]).collect())
}

/// Runs `iterations` steps of `V <- L V L`, row-normalizing `V` after each step.
pub fn diffuse(v0: &DMatrix<f64>, l: &DMatrix<f64>, iterations: usize) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    if l.ncols() != n || v0.shape() != (n, n) {
        return Err(CdsError::DimensionMismatch {
            expected: format!("{n}x{n}"),
            found: format!("{}x{} initial affinity", v0.nrows(), v0.ncols()),
        });
    }
    if iterations == 0 {
        return Err(invalid("iterations", "must be at least 1"));
    }
    let mut v = v0.clone();
    let mut tmp = DMatrix::zeros(n, n);
    for _ in 0..iterations {
        l.mul_to(&v, &mut tmp);
        tmp.mul_to(l, &mut v);
        normalize_rows(&mut v);
    }
    Ok(v)
}

/// Lazy random walk over `l`: self-loops added, then rows normalized to sum to one.
pub fn lazy_transition(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    row_normalized(l + DMatrix::<f64>::identity(n, n))
}

/// Initial affinity, transition and diffusion in one call. The locally constrained affinity
/// is turned into a lazy transition matrix before diffusing.
pub fn diffusion_pipeline(a: &AffinityMatrix, config: &DiffusionConfig) -> Result<DMatrix<f64>> {
    let l = build_locally_constrained_affinity(a, config.transition, config)?;
    diffuse(
        &initial_affinity(a, config.init, config.k),
        &lazy_transition(&l),
        config.iterations,
    )
}

/// Ranks row `query` of `v`. The query comes first, the rest by score with ties by index.
pub fn rank(v: &DMatrix<f64>, query: usize) -> Result<RankedList> {
    if query >= v.nrows() {
        return Err(CdsError::VertexOutOfRange {
            index: query,
            n: v.nrows(),
        });
    }
    let row: Vec<f64> = v.row(query).iter().copied().collect();
    Ok(RankedList::from_scores(query, &row))
}

pub fn rank_all(v: &DMatrix<f64>) -> Vec<RankedList> {
    (0..v.nrows()).map(|q| rank(v, q).expect("query is in range")).collect()
}

fn row_normalized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    normalize_rows(&mut m);
    m
}

fn normalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let s: f64 = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
}

fn symmetrize_max(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    m.zip_map(&t, f64::max)
}

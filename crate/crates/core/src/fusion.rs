//! Query-adaptive fusion of several similarity channels.
//!
//! Per channel: incremental nearest-neighbor selection, a constrained dominant set rooted at the
//! query, outlier rejection and a membership entropy. The entropies and cluster sizes give
//! positive-impact weights (PIW) that fuse the channels together with a voting term.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cds::{extract_cds, ClusterResult, SolverParams};
use crate::error::{invalid, CdsError, Result};
use crate::graph::AffinityMatrix;
use crate::metrics::RankedList;

/// A named similarity channel, min-max normalized to `[0, 1]` over off-diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureChannel {
    pub name: String,
    affinity: AffinityMatrix,
}

impl FeatureChannel {
    /// Accepts any finite square similarity matrix. It is symmetrized by averaging, the
    /// diagonal is ignored and the off-diagonal range is mapped onto `[0, 1]` (constant
    /// matrices map to all ones).
    pub fn new(name: impl Into<String>, sim: &DMatrix<f64>) -> Result<Self> {
        let n = sim.nrows();
        if sim.ncols() != n {
            return Err(CdsError::DimensionMismatch {
                expected: "square similarity matrix".into(),
                found: format!("{}x{}", n, sim.ncols()),
            });
        }
        if let Some((k, _)) = sim.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(CdsError::NonFinite { row: k % n, col: k / n });
        }
        let sym = (sim + sim.transpose()) * 0.5;
        let off = || (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
        let lo = off().map(|(i, j)| sym[(i, j)]).fold(f64::INFINITY, f64::min);
        let hi = off().map(|(i, j)| sym[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
        let norm = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else if hi > lo {
                (sym[(i, j)] - lo) / (hi - lo)
            } else {
                1.0
            }
        });
        Ok(Self {
            name: name.into(),
            affinity: AffinityMatrix::new(norm)?,
        })
    }

    pub fn affinity(&self) -> &AffinityMatrix {
        &self.affinity
    }

    pub fn n(&self) -> usize {
        self.affinity.n()
    }

    /// Gallery of `query` as `(id, similarity)` pairs, strongest first, ties by index.
    pub fn ranked(&self, query: usize) -> Vec<(usize, f64)> {
        let mut r: Vec<(usize, f64)> = (0..self.n())
            .filter(|&j| j != query)
            .map(|j| (j, self.affinity.get(query, j)))
            .collect();
        r.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub channel: String,
    pub ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteScores {
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub v3: Vec<f64>,
}

impl VoteScores {
    pub fn zeros(n: usize) -> Self {
        Self {
            v1: vec![0.0; n],
            v2: vec![0.0; n],
            v3: vec![0.0; n],
        }
    }

    pub fn total(&self, j: usize) -> f64 {
        self.v1[j] + self.v2[j] + self.v3[j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Neighbors proximity coefficient in `(0, 1]`.
    pub npc: f64,
    /// Scale of the outlier threshold.
    pub lambda_scale: f64,
    /// Weight of the PIW-fused similarity against the votes.
    pub lambda: f64,
    /// Vote normalizers; `None` uses the largest attainable count.
    pub eta: Option<f64>,
    pub theta: Option<f64>,
    pub iota: Option<f64>,
    pub solver: SolverParams,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            npc: 0.9,
            lambda_scale: 1.0,
            lambda: 0.7,
            eta: None,
            theta: None,
            iota: None,
            solver: SolverParams::default(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.npc > 0.0 && self.npc <= 1.0) {
            return Err(invalid("npc", "must lie in (0, 1]"));
        }
        if !(self.lambda_scale >= 0.0 && self.lambda_scale.is_finite()) {
            return Err(invalid("lambda_scale", "must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid("lambda", "must lie in [0, 1]"));
        }
        for (name, v) in [("eta", self.eta), ("theta", self.theta), ("iota", self.iota)] {
            if v.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
                return Err(invalid(name, "must be positive"));
            }
        }
        self.solver.validate()
    }
}

/// Per-channel intermediate results for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub name: String,
    pub neighbors: Vec<usize>,
    /// Filtered cluster in global ids, query included.
    pub cluster: Vec<usize>,
    pub zeta: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionResult {
    pub ranked: RankedList,
    pub piw: Vec<f64>,
    pub fused: Vec<f64>,
    pub votes: VoteScores,
    pub channels: Vec<ChannelReport>,
}

/// Walks a descending score list and keeps the prefix up to the first consecutive ratio
/// `s[i+1] / s[i]` that is at most `npc`. Two zero scores count as ratio one.
pub fn incremental_nn_select(ranked: &[(usize, f64)], npc: f64) -> Vec<usize> {
    let mut keep = Vec::with_capacity(ranked.len());
    for (i, &(id, s)) in ranked.iter().enumerate() {
        if i > 0 {
            let prev = ranked[i - 1].1;
            let ratio = if prev > 0.0 {
                s / prev
            } else if s == 0.0 {
                1.0
            } else {
                f64::INFINITY
            };
            if ratio <= npc {
                break;
            }
        }
        keep.push(id);
    }
    keep
}

/// Constrained dominant set of `graph` rooted at the local vertex `query`.
pub fn query_cds(graph: &AffinityMatrix, query: usize, params: &SolverParams) -> Result<ClusterResult> {
    extract_cds(graph, &[query], params)
}

/// `lambda_scale * (1 - max(x) + min(x)) / len(x)`.
pub fn dynamic_threshold(x: &[f64], lambda_scale: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    lambda_scale * (1.0 - max + min) / x.len() as f64
}

/// Support members with membership at least `zeta`, always including `query`. Sorted.
pub fn detect_outliers(cluster: &ClusterResult, query: usize, zeta: f64) -> Vec<usize> {
    let mut keep: Vec<usize> = cluster
        .support
        .iter()
        .copied()
        .filter(|&i| i == query || cluster.x[i] >= zeta)
        .collect();
    if !keep.contains(&query) {
        keep.push(query);
        keep.sort_unstable();
    }
    keep
}

/// Entropy of `p` divided by `ln(len)`; zero for a single entry. Zero probabilities add nothing.
pub fn normalized_entropy(p: &[f64]) -> f64 {
    if p.len() <= 1 {
        return 0.0;
    }
    let h: f64 = -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>();
    (h / (p.len() as f64).ln()).clamp(0.0, 1.0)
}

/// Normalized entropy of the softmax of the cluster's membership scores.
pub fn membership_entropy(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    normalized_entropy(&e.iter().map(|v| v / s).collect::<Vec<_>>())
}

/// Weights `(1 - H_i + |C_i| / sum |C|)` normalized to sum to one. Uniform when all vanish.
pub fn compute_piw(entropies: &[f64], sizes: &[usize]) -> Result<Vec<f64>> {
    if entropies.is_empty() || entropies.len() != sizes.len() {
        return Err(CdsError::DimensionMismatch {
            expected: format!("{} cluster sizes and at least one channel", entropies.len()),
            found: format!("{}", sizes.len()),
        });
    }
    let total = sizes.iter().sum::<usize>() as f64;
    let theta: Vec<f64> = entropies
        .iter()
        .zip(sizes)
        .map(|(h, &c)| (1.0 - h) + if total > 0.0 { c as f64 / total } else { 0.0 })
        .collect();
    let sum = ordered_sum(theta.iter().copied());
    if sum <= 0.0 {
        return Ok(vec![1.0 / theta.len() as f64; theta.len()]);
    }
    Ok(theta.iter().map(|t| t / sum).collect())
}

/// Vote counts over `n` gallery ids from the per-channel neighbor and cluster sets.
///
/// The `phi` sets are the intersections of every `z - 1` neighbor sets. `v1` counts the `phi`
/// sets holding an id, `v2` the clusters holding it and `v3` flags membership in every `phi`
/// set. Normalizers default to `z`, `z` and `1`. A single channel gives no votes.
pub fn vote(
    n: usize,
    nn_sets: &[Vec<usize>],
    cds_sets: &[Vec<usize>],
    eta: Option<f64>,
    theta: Option<f64>,
    iota: Option<f64>,
) -> VoteScores {
    let z = nn_sets.len();
    let mut v = VoteScores::zeros(n);
    if z < 2 {
        return v;
    }
    let member = |sets: &[Vec<usize>]| -> Vec<Vec<bool>> {
        sets.iter()
            .map(|s| {
                let mut m = vec![false; n];
                s.iter().for_each(|&i| m[i] = true);
                m
            })
            .collect()
    };
    let nn = member(nn_sets);
    let cds = member(cds_sets);
    let (eta, theta, iota) = (eta.unwrap_or(z as f64), theta.unwrap_or(z as f64), iota.unwrap_or(1.0));
    for j in 0..n {
        let phi = (0..z)
            .filter(|&skip| (0..z).filter(|&c| c != skip).all(|c| nn[c][j]))
            .count();
        v.v1[j] = phi as f64 / eta;
        v.v2[j] = cds.iter().filter(|m| m[j]).count() as f64 / theta;
        v.v3[j] = if phi == z { 1.0 / iota } else { 0.0 };
    }
    v
}

/// `lambda * prod_i sim_i^piw_i + (1 - lambda) * (v1 + v2 + v3)` per gallery id.
pub fn final_similarity(sims: &[Vec<f64>], piw: &[f64], votes: &VoteScores, lambda: f64) -> Vec<f64> {
    let n = votes.v1.len();
    (0..n)
        .map(|j| {
            let mut zero = false;
            let log = ordered_sum(sims.iter().zip(piw).filter(|(_, &w)| w > 0.0).map(|(s, &w)| {
                zero |= s[j] <= 0.0;
                w * s[j].max(f64::MIN_POSITIVE).ln()
            }));
            let ns = if zero { 0.0 } else { log.exp() };
            lambda * ns + (1.0 - lambda) * votes.total(j)
        })
        .collect()
}

/// Full pipeline for one query.
pub fn retrieve(query: usize, channels: &[FeatureChannel], config: &FusionConfig) -> Result<FusionResult> {
    config.validate()?;
    let first = channels
        .first()
        .ok_or_else(|| invalid("channels", "need at least one channel"))?;
    let n = first.n();
    if let Some(c) = channels.iter().find(|c| c.n() != n) {
        return Err(CdsError::DimensionMismatch {
            expected: format!("{n} items in every channel"),
            found: format!("{} in channel {}", c.n(), c.name),
        });
    }
    if query >= n {
        return Err(CdsError::VertexOutOfRange { index: query, n });
    }
    let reports = channels
        .iter()
        .map(|c| channel_stage(c, query, config))
        .collect::<Result<Vec<_>>>()?;
    let entropies: Vec<f64> = reports.iter().map(|r| r.entropy).collect();
    let sizes: Vec<usize> = reports.iter().map(|r| r.cluster.len()).collect();
    let piw = compute_piw(&entropies, &sizes)?;
    let nn_sets: Vec<Vec<usize>> = reports.iter().map(|r| r.neighbors.clone()).collect();
    let cds_sets: Vec<Vec<usize>> = reports
        .iter()
        .map(|r| r.cluster.iter().copied().filter(|&i| i != query).collect())
        .collect();
    let votes = vote(n, &nn_sets, &cds_sets, config.eta, config.theta, config.iota);
    let sims: Vec<Vec<f64>> = channels
        .iter()
        .map(|c| {
            (0..n)
                .map(|j| if j == query { 1.0 } else { c.affinity.get(query, j) })
                .collect()
        })
        .collect();
    let fused = final_similarity(&sims, &piw, &votes, config.lambda);
    Ok(FusionResult {
        ranked: RankedList::from_scores(query, &fused),
        piw,
        fused,
        votes,
        channels: reports,
    })
}

fn channel_stage(c: &FeatureChannel, query: usize, config: &FusionConfig) -> Result<ChannelReport> {
    let neighbors = incremental_nn_select(&c.ranked(query), config.npc);
    let mut nodes = neighbors.clone();
    nodes.push(query);
    nodes.sort_unstable();
    let local_q = nodes.binary_search(&query).expect("query is a graph node");
    let r = query_cds(&c.affinity.principal_submatrix(&nodes), local_q, &config.solver)?;
    let zeta = dynamic_threshold(&r.x, config.lambda_scale);
    let kept = detect_outliers(&r, local_q, zeta);
    let entropy = membership_entropy(&kept.iter().map(|&i| r.x[i]).collect::<Vec<_>>());
    Ok(ChannelReport {
        name: c.name.clone(),
        neighbors,
        cluster: kept.iter().map(|&i| nodes[i]).collect(),
        zeta,
        entropy,
    })
}

/// Sum in sorted order so the result does not depend on channel order.
fn ordered_sum(it: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = it.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

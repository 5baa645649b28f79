//! Exhaustive dominant-set quantities for small vertex sets.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{CdsError, Result};
use crate::graph::AffinityMatrix;

/// Largest set accepted by the exponential weight recursion.
pub const MAX_ORACLE_SET: usize = 15;

/// Largest graph accepted by [`brute_force_maximal_cliques`].
pub const MAX_CLIQUE_GRAPH: usize = 20;

/// Relative similarity `phi_S(i, j) = a_ij - (1/|S|) sum_{k in S} a_ik` for `i` in `S`, `j` outside.
pub fn phi(a: &AffinityMatrix, s: &[usize], i: usize, j: usize) -> Result<f64> {
    check_vertices(a.n(), s)?;
    check_vertices(a.n(), &[i, j])?;
    if s.is_empty() {
        return Err(CdsError::Membership("phi needs a nonempty set".into()));
    }
    if !s.contains(&i) {
        return Err(CdsError::Membership(format!("vertex {i} is not in the set")));
    }
    if s.contains(&j) {
        return Err(CdsError::Membership(format!("vertex {j} is in the set")));
    }
    let m = a.matrix();
    Ok(m[(i, j)] - s.iter().map(|&k| m[(i, k)]).sum::<f64>() / s.len() as f64)
}

/// Recursive weight `w_S(i)`; equals one for singletons.
pub fn node_weight(a: &AffinityMatrix, s: &[usize], i: usize) -> Result<f64> {
    check_oracle_set(a.n(), s)?;
    let pos = s
        .iter()
        .position(|&v| v == i)
        .ok_or_else(|| CdsError::Membership(format!("vertex {i} is not in the set")))?;
    let mut oracle = WeightOracle::new(a.matrix(), s.to_vec());
    Ok(oracle.weight(full_mask(s.len()), pos))
}

/// Total weight `W(S) = sum_i w_S(i)`.
pub fn total_weight(a: &AffinityMatrix, s: &[usize]) -> Result<f64> {
    check_oracle_set(a.n(), s)?;
    let mut oracle = WeightOracle::new(a.matrix(), s.to_vec());
    Ok(oracle.total(full_mask(s.len())))
}

/// Checks the dominant-set conditions exhaustively.
///
/// Internal conditions are strict; the external condition `w_{S+j}(j) <= 0` is weak so that
/// ties such as isolated vertices and equal-size overlapping cliques are accepted. Weights
/// of a `k`-set are degree `k - 1` in the edge weights, so comparisons carry a tolerance of
/// `1e-12 * max(a)^(k-1)`.
pub fn is_dominant_set(a: &AffinityMatrix, s: &[usize]) -> Result<bool> {
    check_oracle_set(a.n(), s)?;
    if s.is_empty() {
        return Ok(false);
    }
    let amax = a.max_weight();
    let tol = |k: usize| 1e-12 * amax.powi(k as i32 - 1);
    let m = s.len();
    let full = full_mask(m);
    let mut oracle = WeightOracle::new(a.matrix(), s.to_vec());

    for mask in 1..=full {
        if oracle.total(mask) <= tol(mask.count_ones() as usize) {
            return Ok(false);
        }
    }
    for i in 0..m {
        if oracle.weight(full, i) <= tol(m) {
            return Ok(false);
        }
    }
    for j in (0..a.n()).filter(|j| !s.contains(j)) {
        let w = oracle.with_extra(j, |o| o.weight(full | (1 << m), m));
        if w > tol(m + 1) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `x_i = w_S(i) / W(S)` on `S`, zero elsewhere. Rejects sets that are not dominant.
pub fn weighted_characteristic_vector(a: &AffinityMatrix, s: &[usize]) -> Result<Vec<f64>> {
    if !is_dominant_set(a, s)? {
        return Err(CdsError::NotDominant);
    }
    let mut oracle = WeightOracle::new(a.matrix(), s.to_vec());
    let full = full_mask(s.len());
    let w: Vec<f64> = (0..s.len()).map(|i| oracle.weight(full, i)).collect();
    let total: f64 = w.iter().sum();
    let mut x = vec![0.0; a.n()];
    for (k, &v) in s.iter().enumerate() {
        x[v] = w[k] / total;
    }
    Ok(x)
}

/// Every maximal clique of a 0/1 graph, by exhaustive clique enumeration. Cliques are sorted
/// internally and listed in lexicographic order.
pub fn brute_force_maximal_cliques(a: &AffinityMatrix) -> Result<Vec<Vec<usize>>> {
    let n = a.n();
    if n > MAX_CLIQUE_GRAPH {
        return Err(CdsError::TooLarge {
            size: n,
            limit: MAX_CLIQUE_GRAPH,
        });
    }
    let mut adj = vec![0u32; n];
    for (i, row) in adj.iter_mut().enumerate() {
        for j in 0..n {
            let v = a.get(i, j);
            if v != 0.0 && v != 1.0 {
                return Err(CdsError::NonBinary {
                    row: i,
                    col: j,
                    value: v,
                });
            }
            if v == 1.0 {
                *row |= 1 << j;
            }
        }
    }
    let all = full_mask(n);
    let mut out = Vec::new();
    let mut stack: Vec<(u32, u32)> = (0..n).rev().map(|v| (1u32 << v, adj[v] & !((2u32 << v) - 1))).collect();
    while let Some((clique, cand)) = stack.pop() {
        let common = (0..n)
            .filter(|v| clique & (1 << v) != 0)
            .fold(all, |acc, v| acc & adj[v]);
        if common & !clique == 0 {
            out.push(bits(clique));
        }
        let mut rest = cand;
        let mut pushes = Vec::new();
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            pushes.push((clique | (1 << v), cand & adj[v] & !((2u32 << v) - 1)));
        }
        stack.extend(pushes.into_iter().rev());
    }
    out.sort();
    Ok(out)
}

/// Memoised evaluation of the weight recursion over subsets of a small vertex list.
struct WeightOracle<'a> {
    a: &'a DMatrix<f64>,
    verts: Vec<usize>,
    memo: HashMap<(u32, usize), f64>,
}

impl<'a> WeightOracle<'a> {
    fn new(a: &'a DMatrix<f64>, verts: Vec<usize>) -> Self {
        Self {
            a,
            verts,
            memo: HashMap::new(),
        }
    }

    fn weight(&mut self, mask: u32, i: usize) -> f64 {
        if mask.count_ones() == 1 {
            return 1.0;
        }
        if let Some(&w) = self.memo.get(&(mask, i)) {
            return w;
        }
        let rest = mask & !(1 << i);
        let size = rest.count_ones() as f64;
        let vi = self.verts[i];
        let mut sum = 0.0;
        for j in members(rest) {
            let vj = self.verts[j];
            let mean = members(rest).map(|k| self.a[(vj, self.verts[k])]).sum::<f64>() / size;
            let phi = self.a[(vj, vi)] - mean;
            if phi != 0.0 {
                sum += phi * self.weight(rest, j);
            }
        }
        self.memo.insert((mask, i), sum);
        sum
    }

    fn total(&mut self, mask: u32) -> f64 {
        members(mask).map(|i| self.weight(mask, i)).sum()
    }

    /// Temporarily appends vertex `v`, evaluates `f`, then drops memo entries that used it.
    fn with_extra<T>(&mut self, v: usize, f: impl FnOnce(&mut Self) -> T) -> T {
        let bit = 1u32 << self.verts.len();
        self.verts.push(v);
        let out = f(self);
        self.verts.pop();
        self.memo.retain(|&(mask, _), _| mask & bit == 0);
        out
    }
}

fn members(mask: u32) -> impl Iterator<Item = usize> {
    (0..32).filter(move |b| mask & (1 << b) != 0)
}

fn bits(mask: u32) -> Vec<usize> {
    members(mask).collect()
}

fn full_mask(m: usize) -> u32 {
    if m == 0 {
        0
    } else {
        u32::MAX >> (32 - m)
    }
}

fn check_oracle_set(n: usize, s: &[usize]) -> Result<()> {
    if s.len() > MAX_ORACLE_SET {
        return Err(CdsError::TooLarge {
            size: s.len(),
            limit: MAX_ORACLE_SET,
        });
    }
    check_vertices(n, s)?;
    let mut seen = s.to_vec();
    seen.sort_unstable();
    if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
        return Err(CdsError::DuplicateVertex(w[0]));
    }
    Ok(())
}

fn check_vertices(n: usize, s: &[usize]) -> Result<()> {
    match s.iter().find(|&&v| v >= n) {
        Some(&index) => Err(CdsError::VertexOutOfRange { index, n }),
        None => Ok(()),
    }
}

//! A small deterministic version of the differentiable constrained-dominant-set block.
//!
//! Every item of a mini-batch acts as the constraint of its own program. A fixed number of
//! replicator steps from the barycenter gives one row of the membership matrix `Y`, so the map
//! from affinities to `Y` is smooth and its Jacobian can be checked against finite differences.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cds::{extract_cds, SolverParams};
use crate::error::{invalid, CdsError, Result};
use crate::graph::{principal_submatrix, AffinityMatrix, FeatureTable};
use crate::linalg::lambda_max;
use crate::metrics::RankedList;

/// `k` identities with `omega` items each.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    features: FeatureTable,
    labels: Vec<usize>,
    k: usize,
    omega: usize,
}

impl MiniBatch {
    /// Requires labels on `features` and the same number of items for every identity.
    pub fn new(features: FeatureTable) -> Result<Self> {
        let labels = features
            .labels()
            .ok_or_else(|| invalid("labels", "a mini-batch needs identity labels"))?
            .to_vec();
        let mut ids = labels.clone();
        ids.sort_unstable();
        ids.dedup();
        let k = ids.len();
        if k == 0 {
            return Err(invalid("batch", "empty mini-batch"));
        }
        let omega = labels.len() / k;
        if let Some(id) = ids
            .iter()
            .find(|&&id| labels.iter().filter(|&&l| l == id).count() != omega)
        {
            return Err(invalid("batch", format!("identity {id} does not have {omega} items")));
        }
        Ok(Self {
            features,
            labels,
            k,
            omega,
        })
    }

    pub fn m(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn omega(&self) -> usize {
        self.omega
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &FeatureTable {
        &self.features
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub beta: f64,
    pub delta: f64,
    /// Number of unrolled replicator steps.
    pub unroll: usize,
    /// Relative margin of alpha over the spectral bound.
    pub margin: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            beta: 0.9,
            delta: 0.3,
            unroll: 20,
            margin: 1e-4,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(invalid("beta", "must lie in [0, 1]"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", "must lie in (0, 1)"));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(invalid("margin", "must be positive"));
        }
        Ok(())
    }
}

/// `(1 + margin) * lambda_max` of `A` without row and column `probe`.
pub fn probe_alpha(a: &DMatrix<f64>, probe: usize, margin: f64) -> f64 {
    let rest: Vec<usize> = (0..a.nrows()).filter(|&i| i != probe).collect();
    (1.0 + margin) * lambda_max(&principal_submatrix(a, &rest))
}

/// `A` with `-alpha` on every diagonal entry except the probe's.
pub fn modified_affinity(a: &DMatrix<f64>, probe: usize, alpha: f64) -> DMatrix<f64> {
    let mut b = a.clone();
    for i in (0..a.nrows()).filter(|&i| i != probe) {
        b[(i, i)] -= alpha;
    }
    b
}

/// The replicator shift used with a given alpha: alpha itself, or one when alpha vanishes.
pub fn shift_for(alpha: f64) -> f64 {
    if alpha > 0.0 {
        alpha
    } else {
        1.0
    }
}

/// `steps` replicator updates on `B` with shift `c` from the barycenter.
pub fn unrolled(b: &DMatrix<f64>, c: f64, steps: usize) -> DVector<f64> {
    let m = b.nrows();
    let mut x = DVector::from_element(m, 1.0 / m as f64);
    for _ in 0..steps {
        let bx = b * &x;
        let s = c + x.dot(&bx);
        x = x.zip_map(&bx, |xi, bxi| xi * (c + bxi) / s);
    }
    x
}

/// Membership matrix: row `i` is the unrolled iterate of the program constrained to item `i`.
pub fn batch_cds(a: &AffinityMatrix, params: &FusionParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    let m = a.n();
    let rows: Vec<DVector<f64>> = (0..m)
        .into_par_iter()
        .map(|p| {
            let alpha = probe_alpha(a.matrix(), p, params.margin);
            unrolled(
                &modified_affinity(a.matrix(), p, alpha),
                shift_for(alpha),
                params.unroll,
            )
        })
        .collect();
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

/// `F_s = (beta Y) .* ((1 - beta) S')` and `F_d = (beta (delta - Y)) .* ((1 - beta) D')`.
pub fn fuse(
    y: &DMatrix<f64>,
    s: &DMatrix<f64>,
    d: &DMatrix<f64>,
    params: &FusionParams,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    params.validate()?;
    for other in [s, d] {
        if other.shape() != y.shape() {
            return Err(CdsError::DimensionMismatch {
                expected: format!("{}x{}", y.nrows(), y.ncols()),
                found: format!("{}x{}", other.nrows(), other.ncols()),
            });
        }
    }
    let b = params.beta;
    let fs = (y * b).component_mul(&(s * (1.0 - b)));
    let fd = y.map(|v| b * (params.delta - v)).component_mul(&(d * (1.0 - b)));
    Ok((fs, fd))
}

/// `G[i, j] = 1` when items `i` and `j` share an identity.
pub fn target_matrix(labels: &[usize]) -> DMatrix<f64> {
    let m = labels.len();
    DMatrix::from_fn(m, m, |i, j| (labels[i] == labels[j]) as u8 as f64)
}

/// Mean two-class cross-entropy over all pairs, with logits `(F_d, F_s)` and class "similar"
/// where the target is one.
pub fn pair_cross_entropy(fs: &DMatrix<f64>, fd: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<f64> {
    if fs.shape() != fd.shape() || fs.shape() != target.shape() {
        return Err(CdsError::DimensionMismatch {
            expected: format!("{}x{}", fs.nrows(), fs.ncols()),
            found: "differently shaped inputs".into(),
        });
    }
    let n = fs.len().max(1) as f64;
    let total: f64 = fs
        .iter()
        .zip(fd.iter())
        .zip(target.iter())
        .map(|((&s, &d), &t)| {
            let hi = s.max(d);
            let lse = hi + ((s - hi).exp() + (d - hi).exp()).ln();
            lse - if t >= 0.5 { s } else { d }
        })
        .sum();
    Ok(total / n)
}

/// Forward-mode Jacobian of the unrolled iterate for `probe` with respect to every entry of
/// `A`. Column `a * m + b` holds the derivative with respect to `A[a, b]`. Alpha is held at its
/// value for the given `A`.
pub fn unrolled_jacobian(a: &DMatrix<f64>, probe: usize, steps: usize, margin: f64) -> DMatrix<f64> {
    let m = a.nrows();
    let alpha = probe_alpha(a, probe, margin);
    let b = modified_affinity(a, probe, alpha);
    let c = shift_for(alpha);
    let mut x = DVector::from_element(m, 1.0 / m as f64);
    let mut jac = DMatrix::<f64>::zeros(m, m * m);
    for _ in 0..steps {
        let bx = &b * &x;
        let s = c + x.dot(&bx);
        let u = bx.add_scalar(c);
        let bj = &b * &jac;
        let mut next = DMatrix::zeros(m, m * m);
        for col in 0..m * m {
            let (ea, eb) = (col / m, col % m);
            let dx = jac.column(col);
            let du = bj.column(col).clone_owned();
            let ds = x[ea] * x[eb] + dx.dot(&bx) + x.dot(&du);
            for i in 0..m {
                let dui = du[i] + if i == ea { x[eb] } else { 0.0 };
                next[(i, col)] = (dx[i] * u[i] + x[i] * dui) / s - x[i] * u[i] * ds / (s * s);
            }
        }
        x = x.zip_map(&u, |xi, ui| xi * ui / s);
        jac = next;
    }
    jac
}

/// Largest relative error between the forward-mode Jacobian and central differences with
/// step `h`, using `max(|g|, 1e-8)` as the denominator.
pub fn grad_check(a: &DMatrix<f64>, probe: usize, steps: usize, h: f64) -> Result<f64> {
    let m = a.nrows();
    if m == 0 || m > 8 {
        return Err(invalid("batch", "gradient check supports 1 to 8 items"));
    }
    if probe >= m {
        return Err(CdsError::VertexOutOfRange { index: probe, n: m });
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid("h", "must be positive"));
    }
    let margin = FusionParams::default().margin;
    let jac = unrolled_jacobian(a, probe, steps, margin);
    let alpha = probe_alpha(a, probe, margin);
    let c = shift_for(alpha);
    let mut worst: f64 = 0.0;
    for col in 0..m * m {
        let (ea, eb) = (col / m, col % m);
        let eval = |delta: f64| {
            let mut p = a.clone();
            p[(ea, eb)] += delta;
            unrolled(&modified_affinity(&p, probe, alpha), c, steps)
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        for i in 0..m {
            let g = jac[(i, col)];
            if !g.is_finite() || !fd[i].is_finite() {
                return Err(CdsError::NonFiniteGradient { row: ea, col: eb });
            }
            worst = worst.max((g - fd[i]).abs() / g.abs().max(1e-8));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub ranked: RankedList,
    /// Second constraint, or `None` when the fallback ranking was used.
    pub picked: Option<usize>,
}

/// Promotes the strongest member of the probe's neighborhood cluster to a second constraint
/// and ranks the batch by membership in the cluster constrained to both.
///
/// Ties rank by raw similarity to the probe, then by index. When the neighborhood cluster is
/// the probe alone, the single-constraint cluster on the full graph is used instead.
pub fn constraint_expansion(a: &AffinityMatrix, probe: usize, k_nn: usize, solver: &SolverParams) -> Result<Expansion> {
    let m = a.n();
    if probe >= m {
        return Err(CdsError::VertexOutOfRange { index: probe, n: m });
    }
    if k_nn == 0 || k_nn >= m {
        return Err(invalid("k_nn", format!("must lie in 1..{m}")));
    }
    let mut nb: Vec<usize> = (0..m).filter(|&j| j != probe).collect();
    nb.sort_by(|&x, &y| a.get(probe, y).total_cmp(&a.get(probe, x)).then(x.cmp(&y)));
    nb.truncate(k_nn);
    nb.push(probe);
    nb.sort_unstable();
    let local = nb.binary_search(&probe).expect("probe is in its neighborhood");
    let first = extract_cds(&a.principal_submatrix(&nb), &[local], solver)?;
    let picked = first
        .scores()
        .into_iter()
        .find(|&(i, _)| i != local)
        .map(|(i, _)| nb[i]);
    let constraints = match picked {
        Some(p) => {
            let mut s = vec![probe, p];
            s.sort_unstable();
            s
        }
        None => vec![probe],
    };
    let r = extract_cds(a, &constraints, solver)?;
    let x: Vec<f64> = (0..m).map(|i| if r.contains(i) { r.x[i] } else { 0.0 }).collect();
    let mut rest: Vec<usize> = (0..m).filter(|&j| j != probe).collect();
    rest.sort_by(|&i, &j| {
        x[j].total_cmp(&x[i])
            .then(a.get(probe, j).total_cmp(&a.get(probe, i)))
            .then(i.cmp(&j))
    });
    let ids: Vec<usize> = std::iter::once(probe).chain(rest).collect();
    let scores = ids.iter().map(|&i| x[i]).collect();
    Ok(Expansion {
        ranked: RankedList {
            query: probe,
            ids,
            scores,
        },
        picked,
    })
}

//! Discrete replicator dynamics on the standard simplex.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CdsError, Result};
use crate::graph::SYMMETRY_TOL;

/// Tolerance used when checking that a start vector lies on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Residual accepted when certifying a polished stationary point.
const POLISH_TOL: f64 = 1e-9;

/// Polishing is also attempted at every power-of-two iteration from this one on, ending the
/// run early once a stationary point is certified.
const POLISH_FROM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaMode {
    /// `(1 + margin) * lambda_max(A_{V\S})`.
    Auto,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShiftMode {
    /// Smallest shift keeping every update numerator nonnegative; equals alpha for CDS matrices.
    Auto,
    Explicit(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StartMode {
    Barycenter,
    Explicit(Vec<f64>),
    /// Barycenter plus seeded noise of magnitude `1e-3`, repeated `count` times.
    MultiStart {
        count: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub alpha: AlphaMode,
    pub margin: f64,
    pub shift: ShiftMode,
    pub max_iters: usize,
    /// Stationarity tolerance on the infinity-norm change between iterates.
    pub tol: f64,
    pub start: StartMode,
    /// A vertex is in the support when `x_i > support_cutoff * max(x)`.
    pub support_cutoff: f64,
    /// Snap the final iterate to the exact stationary point of its face when one is certified.
    pub polish: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            alpha: AlphaMode::Auto,
            margin: 1e-4,
            shift: ShiftMode::Auto,
            max_iters: 10_000,
            tol: 1e-10,
            start: StartMode::Barycenter,
            support_cutoff: 1e-6,
            polish: true,
        }
    }
}

impl SolverParams {
    pub fn multi_start(count: usize, seed: u64) -> Self {
        Self {
            start: StartMode::MultiStart { count, seed },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(invalid("margin", "must be positive"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(invalid("tol", "must be positive"));
        }
        if !(self.support_cutoff > 0.0 && self.support_cutoff < 1.0) {
            return Err(invalid("support_cutoff", "must lie in (0, 1)"));
        }
        if let AlphaMode::Explicit(a) = self.alpha {
            if !a.is_finite() {
                return Err(invalid("alpha", "must be finite"));
            }
        }
        if let ShiftMode::Explicit(c) = self.shift {
            if !c.is_finite() {
                return Err(invalid("shift", "must be finite"));
            }
        }
        if let StartMode::MultiStart { count: 0, .. } = self.start {
            return Err(invalid("start", "multi-start needs at least one start"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub x: Vec<f64>,
    pub support: Vec<usize>,
    /// Objective `x'Wx` of the matrix the dynamics ran on.
    pub payoff: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// True when the final point was snapped to a certified stationary point.
    pub polished: bool,
    /// Objective value at the start and after every update.
    pub trace: Vec<f64>,
}

impl ClusterResult {
    /// `(vertex, membership)` pairs over the support, strongest first.
    pub fn scores(&self) -> Vec<(usize, f64)> {
        let mut s: Vec<(usize, f64)> = self.support.iter().map(|&i| (i, self.x[i])).collect();
        s.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        s
    }

    pub fn contains(&self, v: usize) -> bool {
        self.support.binary_search(&v).is_ok()
    }
}

/// A solver for `max x'Wx` over the simplex from a given start.
pub trait SimplexSolver {
    fn solve(&self, w: &DMatrix<f64>, x0: &[f64], params: &SolverParams) -> Result<ClusterResult>;
}

/// `x_i <- x_i (C + (Wx)_i) / (C + x'Wx)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReplicatorDynamics;

impl SimplexSolver for ReplicatorDynamics {
    fn solve(&self, w: &DMatrix<f64>, x0: &[f64], params: &SolverParams) -> Result<ClusterResult> {
        let auto = (-w.min()).max(0.0);
        let mut shift = match params.shift {
            ShiftMode::Auto => auto,
            ShiftMode::Explicit(c) => c,
        };
        for _ in 0..2 {
            match iterate(w, x0, shift, params) {
                Some(r) => return Ok(finish(w, r, params)),
                None => shift = shift.max(auto),
            }
        }
        Err(invalid("shift", "update numerators stay negative"))
    }
}

/// Runs the dynamics from every configured start and returns the best-payoff solution.
pub fn run_replicator(w: &DMatrix<f64>, params: &SolverParams) -> Result<ClusterResult> {
    let mut all = solve_all_starts(w, params)?;
    let best = (0..all.len())
        .reduce(|b, i| if all[i].payoff > all[b].payoff { i } else { b })
        .expect("at least one start");
    Ok(all.swap_remove(best))
}

/// Runs every configured start and keeps one result per distinct support, in discovery order.
pub fn run_multi_start(w: &DMatrix<f64>, params: &SolverParams) -> Result<Vec<ClusterResult>> {
    let mut out: Vec<ClusterResult> = Vec::new();
    for r in solve_all_starts(w, params)? {
        if !out.iter().any(|o| o.support == r.support) {
            out.push(r);
        }
    }
    Ok(out)
}

fn solve_all_starts(w: &DMatrix<f64>, params: &SolverParams) -> Result<Vec<ClusterResult>> {
    params.validate()?;
    check_symmetric(w)?;
    start_vectors(w.nrows(), &params.start)?
        .iter()
        .map(|x0| ReplicatorDynamics.solve(w, x0, params))
        .collect()
}

/// Start vectors for the configured mode.
pub fn start_vectors(n: usize, start: &StartMode) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(invalid("w", "matrix must have at least one row"));
    }
    let bary = vec![1.0 / n as f64; n];
    match start {
        StartMode::Barycenter => Ok(vec![bary]),
        StartMode::Explicit(x) => {
            check_simplex(x, n)?;
            let s: f64 = x.iter().sum();
            Ok(vec![x.iter().map(|v| v / s).collect()])
        }
        StartMode::MultiStart { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mag = 1e-3_f64.min(0.5 / n as f64);
            Ok((0..*count)
                .map(|_| {
                    let mut x: Vec<f64> = bary.iter().map(|b| b + mag * rng.random_range(-1.0..1.0)).collect();
                    let s: f64 = x.iter().sum();
                    x.iter_mut().for_each(|v| *v /= s);
                    x
                })
                .collect())
        }
    }
}

/// First-order optimality residual with `lambda = x'Wx`: the largest of `|(Wx)_i - lambda|` on
/// the support and `max(0, (Wx)_i - lambda)` off it.
pub fn kkt_residual(w: &DMatrix<f64>, x: &[f64]) -> f64 {
    kkt_residual_with_cutoff(w, x, SolverParams::default().support_cutoff)
}

pub fn kkt_residual_with_cutoff(w: &DMatrix<f64>, x: &[f64], cutoff: f64) -> f64 {
    let xv = DVector::from_column_slice(x);
    let wx = w * &xv;
    let lambda = xv.dot(&wx);
    let thr = cutoff * x.iter().copied().fold(0.0, f64::max);
    (0..x.len())
        .map(|i| {
            if x[i] > thr {
                (wx[i] - lambda).abs()
            } else {
                (wx[i] - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub fn support_of(x: &[f64], cutoff: f64) -> Vec<usize> {
    let thr = cutoff * x.iter().copied().fold(0.0, f64::max);
    (0..x.len()).filter(|&i| x[i] > thr).collect()
}

pub fn payoff(w: &DMatrix<f64>, x: &[f64]) -> f64 {
    let xv = DVector::from_column_slice(x);
    xv.dot(&(w * &xv))
}

pub(crate) fn check_symmetric(w: &DMatrix<f64>) -> Result<()> {
    if !w.is_square() {
        return Err(CdsError::DimensionMismatch {
            expected: "square matrix".into(),
            found: format!("{}x{}", w.nrows(), w.ncols()),
        });
    }
    let n = w.nrows();
    let mut scale = 0.0_f64;
    for j in 0..n {
        for i in 0..n {
            let v = w[(i, j)];
            if !v.is_finite() {
                return Err(CdsError::NonFinite { row: i, col: j });
            }
            scale = scale.max(v.abs());
        }
    }
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((w[(i, j)] - w[(j, i)]).abs());
        }
    }
    if worst > SYMMETRY_TOL * scale {
        return Err(CdsError::NotSymmetric(worst));
    }
    Ok(())
}

fn check_simplex(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(CdsError::DimensionMismatch {
            expected: format!("{n} entries"),
            found: format!("{} entries", x.len()),
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(CdsError::NotOnSimplex(format!("entry {i} is {}", x[i])));
    }
    let s: f64 = x.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(CdsError::NotOnSimplex(format!("entries sum to {s}")));
    }
    Ok(())
}

struct RawRun {
    x: Vec<f64>,
    iterations: usize,
    stepped_to_tol: bool,
    stalled: bool,
    polished: bool,
    trace: Vec<f64>,
}

/// Returns `None` when the shift is too small for some numerator.
fn iterate(w: &DMatrix<f64>, x0: &[f64], shift: f64, params: &SolverParams) -> Option<RawRun> {
    let mut x = DVector::from_column_slice(x0);
    let mut wx = w * &x;
    let mut trace = vec![x.dot(&wx)];
    let mut iterations = 0;
    let mut stepped_to_tol = false;
    let mut stalled = false;
    let slack = 1e-12 * (shift.abs() + w.amax());
    for _ in 0..params.max_iters {
        if x.iter().zip(wx.iter()).any(|(xi, wi)| *xi > 0.0 && shift + wi < -slack) {
            return None;
        }
        let den = shift + trace[trace.len() - 1];
        if den <= 0.0 {
            stalled = true;
            break;
        }
        let mut step = 0.0_f64;
        for i in 0..x.len() {
            let next = x[i] * (shift + wx[i]).max(0.0) / den;
            step = step.max((next - x[i]).abs());
            x[i] = next;
        }
        let s = x.sum();
        x /= s;
        w.mul_to(&x, &mut wx);
        trace.push(x.dot(&wx));
        iterations += 1;
        if step < params.tol {
            stepped_to_tol = true;
            break;
        }
        if params.polish && iterations >= POLISH_FROM && iterations.is_power_of_two() {
            let strict = polish(w, x.as_slice(), params.support_cutoff)
                .filter(|q| is_strict_on_face(w, &support_of(q, params.support_cutoff)));
            if let Some(q) = strict {
                trace.push(payoff(w, &q));
                return Some(RawRun {
                    x: q,
                    iterations,
                    stepped_to_tol,
                    stalled,
                    polished: true,
                    trace,
                });
            }
        }
    }
    Some(RawRun {
        x: x.as_slice().to_vec(),
        iterations,
        stepped_to_tol,
        stalled,
        polished: false,
        trace,
    })
}

fn finish(w: &DMatrix<f64>, run: RawRun, params: &SolverParams) -> ClusterResult {
    let RawRun {
        mut x,
        iterations,
        stepped_to_tol,
        stalled,
        mut polished,
        mut trace,
    } = run;
    if params.polish && !polished {
        if let Some(q) = polish(w, &x, params.support_cutoff) {
            x = q;
            polished = true;
            trace.push(payoff(w, &x));
        }
    }
    let kkt = kkt_residual_with_cutoff(w, &x, params.support_cutoff);
    let converged = stepped_to_tol || polished || (stalled && kkt <= POLISH_TOL);
    ClusterResult {
        support: support_of(&x, params.support_cutoff),
        payoff: payoff(w, &x),
        kkt_residual: kkt,
        iterations,
        converged,
        polished,
        trace,
        x,
    }
}

/// True when `W` restricted to `t` is negative definite on the directions that keep the sum
/// fixed, so a stationary point with support `t` is a strict local maximizer on its face.
fn is_strict_on_face(w: &DMatrix<f64>, t: &[usize]) -> bool {
    let k = t.len();
    if k < 2 {
        return true;
    }
    let scale = w.amax().max(1.0);
    let kf = k as f64;
    let sub = DMatrix::from_fn(k, k, |a, b| w[(t[a], t[b])]);
    let proj = DMatrix::from_fn(k, k, |a, b| (a == b) as u8 as f64 - 1.0 / kf);
    let neg = -(&proj * sub * &proj) + DMatrix::from_element(k, k, (1.0 + scale) / kf)
        - DMatrix::identity(k, k) * (1e-12 * scale);
    neg.cholesky().is_some()
}

/// Moves `x` to the nearest exact stationary point of its face.
///
/// The equalities `(W_TT y)_i = lambda`, `sum y = 1` on the current support `T` are solved for
/// the correction from `(x_T, x'Wx)`, taking the minimum-norm one when the system is singular.
/// Components that come out negative are dropped one at a time. The candidate is accepted only if it satisfies the full optimality
/// conditions and does not lower the objective.
fn polish(w: &DMatrix<f64>, x: &[f64], cutoff: f64) -> Option<Vec<f64>> {
    let scale = w.amax().max(1.0);
    let base = payoff(w, x);
    let mut t = support_of(x, cutoff);
    while !t.is_empty() {
        let k = t.len();
        let mut m = DMatrix::zeros(k + 1, k + 1);
        for (a, &i) in t.iter().enumerate() {
            for (b, &j) in t.iter().enumerate() {
                m[(a, b)] = w[(i, j)];
            }
            m[(a, k)] = -1.0;
            m[(k, a)] = 1.0;
        }
        let mut rhs = DVector::zeros(k + 1);
        rhs[k] = 1.0;
        let mut z0 = DVector::zeros(k + 1);
        for (a, &i) in t.iter().enumerate() {
            z0[a] = x[i];
        }
        z0[k] = base;
        let r = &rhs - &m * &z0;
        let fits = |z: &DVector<f64>| z.iter().all(|v| v.is_finite()) && (&m * z - &rhs).amax() <= POLISH_TOL * scale;
        let z = match m.clone().lu().solve(&r).map(|d| &z0 + d) {
            Some(z) if fits(&z) => z,
            _ => {
                let svd = m.clone().svd(true, true);
                let eps = 1e-10 * svd.singular_values.max();
                let z = &z0 + svd.solve(&r, eps).ok()?;
                if !fits(&z) {
                    return None;
                }
                z
            }
        };
        let (argmin, ymin) = (0..k)
            .map(|a| (a, z[a]))
            .fold((0, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc });
        if ymin < -1e-12 {
            t.remove(argmin);
            continue;
        }
        let mut q = vec![0.0; x.len()];
        for (a, &i) in t.iter().enumerate() {
            q[i] = z[a].max(0.0);
        }
        let floor = cutoff * q.iter().copied().fold(0.0, f64::max);
        q.iter_mut().filter(|v| **v <= floor).for_each(|v| *v = 0.0);
        let s: f64 = q.iter().sum();
        if s.is_nan() || s <= 0.0 {
            return None;
        }
        q.iter_mut().for_each(|v| *v /= s);
        if kkt_residual_with_cutoff(w, &q, cutoff) > POLISH_TOL * scale {
            return None;
        }
        if payoff(w, &q) < base - 1e-12 * scale {
            return None;
        }
        return Some(q);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn k3() -> DMatrix<f64> {
        DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 })
    }

    #[test]
    fn zero_matrix_is_stationary() {
        let w = DMatrix::zeros(4, 4);
        let start = vec![0.1, 0.2, 0.3, 0.4];
        let params = SolverParams {
            start: StartMode::Explicit(start.clone()),
            ..SolverParams::default()
        };
        let r = run_replicator(&w, &params).unwrap();
        for (a, b) in r.x.iter().zip(&start) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert!(r.converged);
        assert_eq!(r.kkt_residual, 0.0);
    }

    #[test]
    fn k3_converges_to_barycenter() {
        let r = run_replicator(&k3(), &SolverParams::default()).unwrap();
        for v in &r.x {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(r.payoff, 2.0 / 3.0, epsilon = 1e-12);
        assert!(r.converged);
        assert_eq!(r.support, vec![0, 1, 2]);
    }

    #[test]
    fn kkt_of_exact_ess() {
        assert!(kkt_residual(&k3(), &[1.0 / 3.0; 3]) <= 1e-10);
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(kkt_residual(&w, &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(matches!(
            run_replicator(&w, &SolverParams::default()),
            Err(CdsError::NotSymmetric(_))
        ));
    }

    #[test]
    fn rejects_bad_start() {
        let params = SolverParams {
            start: StartMode::Explicit(vec![0.5, 0.6, 0.0]),
            ..SolverParams::default()
        };
        assert!(run_replicator(&k3(), &params).is_err());
        let params = SolverParams {
            start: StartMode::Explicit(vec![1.0, 0.0]),
            ..SolverParams::default()
        };
        assert!(run_replicator(&k3(), &params).is_err());
    }

    #[test]
    fn small_explicit_shift_is_raised() {
        let w = DMatrix::from_row_slice(2, 2, &[-2.0, 0.5, 0.5, 0.0]);
        let params = SolverParams {
            shift: ShiftMode::Explicit(0.0),
            ..SolverParams::default()
        };
        let r = run_replicator(&w, &params).unwrap();
        assert!(r.x.iter().all(|v| *v >= 0.0));
        assert!(r.converged);
        assert!(r.kkt_residual <= 1e-6);
    }

    #[test]
    fn multi_start_is_deterministic() {
        let a = start_vectors(5, &StartMode::MultiStart { count: 3, seed: 9 }).unwrap();
        let b = start_vectors(5, &StartMode::MultiStart { count: 3, seed: 9 }).unwrap();
        assert_eq!(a, b);
        for x in &a {
            assert_abs_diff_eq!(x.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
            assert!(x.iter().all(|v| (v - 0.2).abs() < 2e-3));
        }
    }

    #[test]
    fn trace_is_monotone() {
        let w = DMatrix::from_fn(6, 6, |i, j| {
            if i == j {
                0.0
            } else {
                (((i + 1) * (j + 1)) % 7) as f64 / 7.0
            }
        });
        let r = run_replicator(&w, &SolverParams::default()).unwrap();
        for p in r.trace.windows(2) {
            assert!(p[1] >= p[0] - 1e-12);
        }
    }
}

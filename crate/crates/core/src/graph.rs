//! Affinity and distance matrices and their constructors.

use nalgebra::DMatrix;

use crate::error::{invalid, CdsError, Result};

/// Relative symmetry tolerance applied to affinity and distance matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Lower bound applied to self-tuning scales so duplicate points stay finite.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// An `n x d` table of item features with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    values: DMatrix<f64>,
    labels: Option<Vec<usize>>,
}

impl FeatureTable {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(invalid("features", "table needs at least one row"));
        }
        check_finite(&values)?;
        Ok(Self { values, labels: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(CdsError::DimensionMismatch {
                    expected: format!("{d} columns"),
                    found: format!("{} columns in row {i}", r.len()),
                });
            }
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.rows() {
            return Err(CdsError::DimensionMismatch {
                expected: format!("{} labels", self.rows()),
                found: format!("{} labels", labels.len()),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Squared Euclidean distance between rows `i` and `j`.
    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        (0..self.dims())
            .map(|c| {
                let d = self.values[(i, c)] - self.values[(j, c)];
                d * d
            })
            .sum()
    }
}

/// Symmetric, nonnegative edge-weight matrix with an exactly zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    w: DMatrix<f64>,
}

impl AffinityMatrix {
    /// Wraps `w` after checking every affinity invariant.
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        let report = validate_affinity(&w);
        if let Some((r, c)) = report.non_square {
            return Err(CdsError::DimensionMismatch {
                expected: "square matrix".into(),
                found: format!("{r}x{c}"),
            });
        }
        if let Some(&(row, col)) = report.non_finite.first() {
            return Err(CdsError::NonFinite { row, col });
        }
        if let Some(&(row, col, value)) = report.negative_entries.first() {
            return Err(CdsError::NegativeWeight { row, col, value });
        }
        if let Some(&(index, value)) = report.diagonal_violations.first() {
            return Err(CdsError::NonZeroDiagonal { index, value });
        }
        if let Some(worst) = report.symmetry_defects.iter().map(|d| d.magnitude).reduce(f64::max) {
            return Err(CdsError::NotSymmetric(worst));
        }
        Ok(Self { w })
    }

    /// Builds an unweighted or weighted graph from an edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, v) in edges {
            if i >= n || j >= n {
                return Err(CdsError::VertexOutOfRange { index: i.max(j), n });
            }
            if i == j {
                return Err(CdsError::NonZeroDiagonal { index: i, value: v });
            }
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        Self::new(w)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            w: DMatrix::zeros(n, n),
        }
    }

    /// Internal constructor for matrices that are symmetric with zero diagonal by construction.
    pub(crate) fn from_trusted(w: DMatrix<f64>) -> Self {
        debug_assert!(w.is_square());
        Self { w }
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.w
    }

    pub fn max_weight(&self) -> f64 {
        self.w.iter().copied().fold(0.0, f64::max)
    }

    /// Number of nonzero entries.
    pub fn nnz(&self) -> usize {
        self.w.iter().filter(|v| **v != 0.0).count()
    }

    /// The principal submatrix indexed by `idx`, in the given order.
    pub fn principal_submatrix(&self, idx: &[usize]) -> AffinityMatrix {
        AffinityMatrix::from_trusted(principal_submatrix(&self.w, idx))
    }
}

/// Symmetric matrix of nonnegative pairwise distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    d: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(d: DMatrix<f64>) -> Result<Self> {
        let report = validate_affinity(&d);
        if let Some((r, c)) = report.non_square {
            return Err(CdsError::DimensionMismatch {
                expected: "square matrix".into(),
                found: format!("{r}x{c}"),
            });
        }
        if let Some(&(row, col)) = report.non_finite.first() {
            return Err(CdsError::NonFinite { row, col });
        }
        if let Some(&(row, col, value)) = report.negative_entries.first() {
            return Err(CdsError::NegativeWeight { row, col, value });
        }
        if let Some(&(index, value)) = report.diagonal_violations.first() {
            return Err(CdsError::NonZeroDiagonal { index, value });
        }
        if let Some(d) = report.symmetry_defects.first() {
            return Err(CdsError::NotSymmetric(d.magnitude));
        }
        Ok(Self { d })
    }

    /// Euclidean distances between the rows of a feature table.
    pub fn euclidean(features: &FeatureTable) -> Self {
        let n = features.rows();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = features.sq_dist(i, j).sqrt();
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        Self { d }
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// Copy rescaled so the largest distance is one. An all-zero matrix is returned unchanged.
    pub fn normalized(&self) -> Self {
        let m = self.d.iter().copied().fold(0.0, f64::max);
        if m > 0.0 {
            Self { d: &self.d / m }
        } else {
            self.clone()
        }
    }
}

/// One asymmetric pair found by [`validate_affinity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryDefect {
    pub row: usize,
    pub col: usize,
    pub magnitude: f64,
}

/// Diagnostics for a candidate affinity matrix. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub non_square: Option<(usize, usize)>,
    pub symmetry_defects: Vec<SymmetryDefect>,
    pub negative_entries: Vec<(usize, usize, f64)>,
    pub diagonal_violations: Vec<(usize, f64)>,
    pub non_finite: Vec<(usize, usize)>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.non_square.is_none()
            && self.symmetry_defects.is_empty()
            && self.negative_entries.is_empty()
            && self.diagonal_violations.is_empty()
            && self.non_finite.is_empty()
    }
}

/// Reports every violation of the affinity invariants without failing.
pub fn validate_affinity(m: &DMatrix<f64>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (r, c) = m.shape();
    if r != c {
        report.non_square = Some((r, c));
        return report;
    }
    let scale = m
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tol = SYMMETRY_TOL * scale;
    for i in 0..r {
        for j in 0..c {
            let v = m[(i, j)];
            if !v.is_finite() {
                report.non_finite.push((i, j));
                continue;
            }
            if v < 0.0 {
                report.negative_entries.push((i, j, v));
            }
            if i == j && v != 0.0 {
                report.diagonal_violations.push((i, v));
            }
            if j > i {
                let t = m[(j, i)];
                if t.is_finite() && (v - t).abs() > tol {
                    report.symmetry_defects.push(SymmetryDefect {
                        row: i,
                        col: j,
                        magnitude: (v - t).abs(),
                    });
                }
            }
        }
    }
    report
}

/// Gaussian kernel `exp(-|f_i - f_j|^2 / 2 sigma^2)` with a zero diagonal.
pub fn build_gaussian_affinity(features: &FeatureTable, sigma: f64) -> Result<AffinityMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be positive and finite, got {sigma}")));
    }
    let denom = 2.0 * sigma * sigma;
    Ok(symmetric_kernel(features.rows(), |i, j| {
        (-features.sq_dist(i, j) / denom).exp()
    }))
}

/// Locally scaled kernel `exp(-|f_i - f_j|^2 / (sigma_i sigma_j))`, where `sigma_i` is the
/// mean distance from item `i` to its `k` nearest neighbours.
pub fn build_self_tuning_affinity(features: &FeatureTable, k: usize) -> Result<AffinityMatrix> {
    let n = features.rows();
    if k == 0 || k >= n {
        return Err(invalid("k", format!("need 1 <= k < n = {n}, got {k}")));
    }
    let scales = self_tuning_scales(features, k);
    Ok(symmetric_kernel(n, |i, j| {
        (-features.sq_dist(i, j) / (scales[i] * scales[j])).exp()
    }))
}

/// Per-item local scales used by [`build_self_tuning_affinity`].
pub fn self_tuning_scales(features: &FeatureTable, k: usize) -> Vec<f64> {
    let n = features.rows();
    (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| features.sq_dist(i, j).sqrt())
                .collect();
            d.sort_by(f64::total_cmp);
            let s = d.iter().take(k).sum::<f64>() / k as f64;
            s.max(SIGMA_FLOOR)
        })
        .collect()
}

/// Converts distances with `exp(-d_ij / 2 sigma^2)`. The raw distance sits in the exponent.
pub fn distance_to_similarity(dist: &DistanceMatrix, sigma: f64) -> Result<AffinityMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be positive and finite, got {sigma}")));
    }
    let denom = 2.0 * sigma * sigma;
    Ok(symmetric_kernel(dist.n(), |i, j| (-dist.get(i, j) / denom).exp()))
}

/// Rescales every column to `[0, 1]`. Constant columns become zero.
pub fn minmax_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        if range > 0.0 {
            col.iter_mut().for_each(|v| *v = (*v - lo) / range);
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// Column-wise min-max normalisation followed by `(A + A') / 2` and a zeroed diagonal.
pub fn minmax_normalize_columns(a: &AffinityMatrix) -> AffinityMatrix {
    let scaled = minmax_columns(a.matrix());
    let mut sym = (&scaled + scaled.transpose()) * 0.5;
    sym.fill_diagonal(0.0);
    AffinityMatrix::from_trusted(sym)
}

pub(crate) fn principal_submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

fn symmetric_kernel(n: usize, f: impl Fn(usize, usize) -> f64) -> AffinityMatrix {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = f(i, j);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    AffinityMatrix::from_trusted(w)
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(CdsError::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

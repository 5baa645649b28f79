//! Constrained segmentation and co-segmentation over superpixel graphs.
//!
//! Superpixel features, adjacency, objectness and ground truth are inputs; no image processing
//! happens here. Segmentation extracts the union of constrained dominant sets (UDS) covering
//! the annotated superpixels.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cds::{complement, extract_cds, peel_off_extract, SolverParams};
use crate::error::{invalid, CdsError, Result};
use crate::graph::{
    build_gaussian_affinity, build_self_tuning_affinity, minmax_normalize_columns, AffinityMatrix, FeatureTable,
};

/// Symmetric boolean superpixel adjacency without self loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    cells: Vec<bool>,
}

impl Adjacency {
    /// From a 0/1 matrix. The diagonal is ignored.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(CdsError::DimensionMismatch {
                expected: "square adjacency".into(),
                found: format!("{}x{}", n, m.ncols()),
            });
        }
        let mut cells = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(CdsError::NonBinary {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
                if v != m[(j, i)] {
                    return Err(CdsError::NotSymmetric(1.0));
                }
                cells[i * n + j] = i != j && v == 1.0;
            }
        }
        Ok(Self { n, cells })
    }

    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut cells = vec![false; n * n];
        for &(i, j) in pairs {
            if i >= n || j >= n {
                return Err(CdsError::VertexOutOfRange { index: i.max(j), n });
            }
            if i != j {
                cells[i * n + j] = true;
                cells[j * n + i] = true;
            }
        }
        Ok(Self { n, cells })
    }

    /// 8-connected `rows x cols` grid in row-major order.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let mut pairs = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                for (dr, dc) in [(0, 1), (1, -1), (1, 0), (1, 1)] {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr < rows as isize && cc >= 0 && cc < cols as isize {
                        pairs.push((r * cols + c, rr as usize * cols + cc as usize));
                    }
                }
            }
        }
        Self::from_pairs(rows * cols, &pairs).expect("grid pairs are in range")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.n + j]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.adjacent(i, j) as u8 as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationInstance {
    pub features: FeatureTable,
    pub adjacency: Adjacency,
    pub pixel_counts: Option<Vec<f64>>,
    pub ground_truth: Option<Vec<bool>>,
}

impl SegmentationInstance {
    pub fn new(
        features: FeatureTable,
        adjacency: Adjacency,
        pixel_counts: Option<Vec<f64>>,
        ground_truth: Option<Vec<bool>>,
    ) -> Result<Self> {
        let n = features.rows();
        let check = |what: &str, len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(CdsError::DimensionMismatch {
                    expected: format!("{n} superpixels"),
                    found: format!("{len} in {what}"),
                })
            }
        };
        check("adjacency", adjacency.n())?;
        if let Some(p) = &pixel_counts {
            check("pixel counts", p.len())?;
            if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(invalid("pixel_counts", "must be finite and nonnegative"));
            }
        }
        if let Some(g) = &ground_truth {
            check("ground truth", g.len())?;
        }
        Ok(Self {
            features,
            adjacency,
            pixel_counts,
            ground_truth,
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationMode {
    ScribbleFg,
    ScribbleFgBg,
    BoundingBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Fg,
    Bg,
}

/// User input. In bounding-box mode `ids` are the superpixels outside or on the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub mode: AnnotationMode,
    pub ids: Vec<usize>,
    /// Per-id labels, only read in `scribble_fg_bg` mode.
    #[serde(default)]
    pub labels: Vec<Label>,
}

impl Annotation {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.ids.is_empty() {
            return Err(invalid("annotation", "constraint set is empty"));
        }
        if let Some(&index) = self.ids.iter().find(|&&i| i >= n) {
            return Err(CdsError::VertexOutOfRange { index, n });
        }
        if self.mode == AnnotationMode::ScribbleFgBg && self.labels.len() != self.ids.len() {
            return Err(CdsError::DimensionMismatch {
                expected: format!("{} labels", self.ids.len()),
                found: format!("{}", self.labels.len()),
            });
        }
        Ok(())
    }

    /// Foreground and background ids. Ids labeled both ways are dropped from both.
    pub fn split(&self) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let mut fg: Vec<usize> = Vec::new();
        let mut bg: Vec<usize> = Vec::new();
        for (k, &id) in self.ids.iter().enumerate() {
            match self.labels.get(k) {
                Some(Label::Bg) => bg.push(id),
                _ => fg.push(id),
            }
        }
        fg.sort_unstable();
        fg.dedup();
        bg.sort_unstable();
        bg.dedup();
        let conflicts: Vec<usize> = fg.iter().copied().filter(|i| bg.binary_search(i).is_ok()).collect();
        fg.retain(|i| !conflicts.contains(i));
        bg.retain(|i| !conflicts.contains(i));
        (fg, bg, conflicts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AffinityKind {
    Gaussian { sigma: f64 },
    SelfTuning { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    pub affinity: AffinityKind,
    pub solver: SolverParams,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            affinity: AffinityKind::SelfTuning { k: 7 },
            solver: SolverParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentOutput {
    /// Sorted foreground superpixel ids.
    pub mask: Vec<usize>,
    /// Supports of the extracted clusters, in extraction order.
    pub clusters: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

pub fn build_affinity(features: &FeatureTable, kind: AffinityKind) -> Result<AffinityMatrix> {
    match kind {
        AffinityKind::Gaussian { sigma } => build_gaussian_affinity(features, sigma),
        AffinityKind::SelfTuning { k } => build_self_tuning_affinity(features, k),
    }
}

/// Segments one instance. Scribbles give the UDS of the scribbled superpixels, a bounding box
/// gives the complement of the UDS of the superpixels outside it. Foreground/background
/// scribbles run [`error_tolerant_segment`].
pub fn segment(
    instance: &SegmentationInstance,
    annotation: &Annotation,
    params: &SegmentationParams,
) -> Result<SegmentOutput> {
    annotation.validate(instance.n())?;
    let a = build_affinity(&instance.features, params.affinity)?;
    match annotation.mode {
        AnnotationMode::ScribbleFgBg => {
            let (fg, bg, conflicts) = annotation.split();
            let mut out = error_tolerant_on(&a, &fg, &bg, &params.solver)?;
            if !conflicts.is_empty() {
                out.warnings
                    .insert(0, format!("dropped conflicting labels on {conflicts:?}"));
            }
            Ok(out)
        }
        mode => {
            let uds = peel_off_extract(&a, &annotation.ids, &params.solver)?;
            let clusters: Vec<Vec<usize>> = uds.clusters.into_iter().map(|c| c.support).collect();
            let mask = if mode == AnnotationMode::BoundingBox {
                complement(instance.n(), &uds.union_support)
            } else {
                uds.union_support
            };
            Ok(SegmentOutput {
                mask,
                clusters,
                warnings: Vec::new(),
            })
        }
    }
}

/// Peels off clusters seeded by the foreground scribbles and keeps those without any
/// background scribble.
pub fn error_tolerant_segment(
    instance: &SegmentationInstance,
    fg: &[usize],
    bg: &[usize],
    params: &SegmentationParams,
) -> Result<SegmentOutput> {
    let a = build_affinity(&instance.features, params.affinity)?;
    error_tolerant_on(&a, fg, bg, &params.solver)
}

fn error_tolerant_on(a: &AffinityMatrix, fg: &[usize], bg: &[usize], solver: &SolverParams) -> Result<SegmentOutput> {
    if fg.is_empty() || bg.is_empty() {
        return Err(invalid("scribbles", "need both foreground and background scribbles"));
    }
    if let Some(&index) = bg.iter().find(|&&i| i >= a.n()) {
        return Err(CdsError::VertexOutOfRange { index, n: a.n() });
    }
    let uds = peel_off_extract(a, fg, solver)?;
    let clusters: Vec<Vec<usize>> = uds.clusters.into_iter().map(|c| c.support).collect();
    let mut mask: Vec<usize> = clusters
        .iter()
        .filter(|c| !bg.iter().any(|b| c.binary_search(b).is_ok()))
        .flatten()
        .copied()
        .collect();
    mask.sort_unstable();
    let warnings = if mask.is_empty() {
        vec!["every extracted cluster contains a background scribble; mask is empty".to_string()]
    } else {
        Vec::new()
    };
    Ok(SegmentOutput {
        mask,
        clusters,
        warnings,
    })
}

/// Converts sorted ids to a boolean mask over `n` superpixels.
pub fn ids_to_mask(ids: &[usize], n: usize) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in ids {
        m[i] = true;
    }
    m
}

/// All-pairs shortest paths on the adjacency graph weighted by Euclidean feature distance.
/// Unreachable pairs are infinite.
pub fn geodesic_distances(features: &FeatureTable, adjacency: &Adjacency) -> DMatrix<f64> {
    let n = features.rows();
    let mut d = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else if adjacency.adjacent(i, j) {
            features.sq_dist(i, j).sqrt()
        } else {
            f64::INFINITY
        }
    });
    for k in 0..n {
        for i in 0..n {
            let dik = d[(i, k)];
            if dik.is_infinite() {
                continue;
            }
            for j in 0..n {
                let via = dik + d[(k, j)];
                if via < d[(i, j)] {
                    d[(i, j)] = via;
                }
            }
        }
    }
    d
}

/// `max(D) - D(p, q) + min(D)` on adjacent pairs, zero elsewhere, where `D` is the geodesic
/// distance and the extremes run over finite off-diagonal entries.
pub fn geodesic_adjacency_similarity(features: &FeatureTable, adjacency: &Adjacency) -> Result<DMatrix<f64>> {
    if adjacency.n() != features.rows() {
        return Err(CdsError::DimensionMismatch {
            expected: format!("{} superpixels", features.rows()),
            found: format!("{} in adjacency", adjacency.n()),
        });
    }
    let d = geodesic_distances(features, adjacency);
    let n = d.nrows();
    let finite = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && d[(i, j)].is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (i, j)| {
        (lo.min(d[(i, j)]), hi.max(d[(i, j)]))
    });
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if adjacency.adjacent(i, j) && d[(i, j)].is_finite() {
            hi - d[(i, j)] + lo
        } else {
            0.0
        }
    }))
}

/// `P_f P_f'` with a zero diagonal.
pub fn objectness_affinity(pf: &[f64]) -> Result<DMatrix<f64>> {
    if let Some(v) = pf.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(invalid("objectness", format!("{v} is outside [0, 1]")));
    }
    let n = pf.len();
    Ok(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { pf[i] * pf[j] }))
}

/// `A_m / 2 + (A_c + A_s + A_h) / 6`.
pub fn coseg_payoff(
    ac: &DMatrix<f64>,
    as_: &DMatrix<f64>,
    ah: &DMatrix<f64>,
    am: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    for m in [as_, ah, am] {
        if m.shape() != ac.shape() {
            return Err(CdsError::DimensionMismatch {
                expected: format!("{}x{}", ac.nrows(), ac.ncols()),
                found: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
    }
    Ok(am * 0.5 + (ac + as_ + ah) / 6.0)
}

/// One image of a co-segmentation set.
#[derive(Debug, Clone, PartialEq)]
pub struct CosegInstance {
    pub color: FeatureTable,
    pub sift: FeatureTable,
    pub hog: FeatureTable,
    pub adjacency: Adjacency,
    /// Foreground probability per superpixel.
    pub objectness: Vec<f64>,
    pub ground_truth: Option<Vec<bool>>,
}

impl CosegInstance {
    pub fn n(&self) -> usize {
        self.color.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let lens = [
            ("sift", self.sift.rows()),
            ("hog", self.hog.rows()),
            ("adjacency", self.adjacency.n()),
            ("objectness", self.objectness.len()),
            ("ground truth", self.ground_truth.as_ref().map_or(n, Vec::len)),
        ];
        if let Some((what, len)) = lens.iter().find(|(_, l)| *l != n) {
            return Err(CdsError::DimensionMismatch {
                expected: format!("{n} superpixels"),
                found: format!("{len} in {what}"),
            });
        }
        if self.objectness.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("objectness", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Per-image masks from a co-segmentation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosegOutput {
    pub masks: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

/// Joint payoff over all superpixels of `images`, with image `k` occupying the rows from
/// `offsets[k]` to `offsets[k + 1]`.
///
/// Within an image, color and HoG use the geodesic edge similarity and SIFT the dot product on
/// adjacent pairs. Across images, color and HoG use `max(D) - D + min(D)` on Euclidean distance
/// and SIFT the dot product. Each channel is min-max normalized before combining.
pub fn coseg_affinity(images: &[CosegInstance]) -> Result<(AffinityMatrix, Vec<usize>)> {
    for im in images {
        im.validate()?;
    }
    let mut offsets = vec![0];
    for im in images {
        offsets.push(offsets.last().unwrap() + im.n());
    }
    let total = *offsets.last().unwrap();
    let channel = |pick: fn(&CosegInstance) -> &FeatureTable, dot: bool| -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(total, total);
        for (a, ia) in images.iter().enumerate() {
            for (b, ib) in images.iter().enumerate() {
                let block = if a == b {
                    if dot {
                        let g = pick(ia).values() * pick(ia).values().transpose();
                        DMatrix::from_fn(ia.n(), ia.n(), |i, j| {
                            if ia.adjacency.adjacent(i, j) {
                                g[(i, j)]
                            } else {
                                0.0
                            }
                        })
                    } else {
                        geodesic_adjacency_similarity(pick(ia), &ia.adjacency)?
                    }
                } else if dot {
                    pick(ia).values() * pick(ib).values().transpose()
                } else {
                    cross_similarity(pick(ia), pick(ib))?
                };
                m.view_mut((offsets[a], offsets[b]), (ia.n(), ib.n())).copy_from(&block);
            }
        }
        m.fill_diagonal(0.0);
        let m = m.map(|v| v.max(0.0));
        Ok(minmax_normalize_columns(&AffinityMatrix::new((&m + m.transpose()) * 0.5)?).into_matrix())
    };
    let ac = channel(|i| &i.color, false)?;
    let as_ = channel(|i| &i.sift, true)?;
    let ah = channel(|i| &i.hog, false)?;
    let pf: Vec<f64> = images.iter().flat_map(|i| i.objectness.iter().copied()).collect();
    let am = objectness_affinity(&pf)?;
    let m = coseg_payoff(&ac, &as_, &ah, &am)?;
    Ok((AffinityMatrix::new(m)?, offsets))
}

fn cross_similarity(fa: &FeatureTable, fb: &FeatureTable) -> Result<DMatrix<f64>> {
    if fa.dims() != fb.dims() {
        return Err(CdsError::DimensionMismatch {
            expected: format!("{} feature dimensions", fa.dims()),
            found: format!("{}", fb.dims()),
        });
    }
    let d = DMatrix::from_fn(fa.rows(), fb.rows(), |i, j| {
        (fa.values().row(i) - fb.values().row(j)).norm()
    });
    let (lo, hi) = (d.min(), d.max());
    Ok(d.map(|v| hi - v + lo))
}

/// Unsupervised co-segmentation of a pair. Each image in turn is the constraint set; the two
/// extracted clusters are intersected and split per image.
pub fn coseg_unsupervised(first: &CosegInstance, second: &CosegInstance, solver: &SolverParams) -> Result<CosegOutput> {
    let (a, off) = coseg_affinity(&[first.clone(), second.clone()])?;
    let img1: Vec<usize> = (off[0]..off[1]).collect();
    let img2: Vec<usize> = (off[1]..off[2]).collect();
    let o2 = extract_cds(&a, &img1, solver)?;
    let o1 = extract_cds(&a, &img2, solver)?;
    let both: Vec<usize> = o1.support.iter().copied().filter(|v| o2.contains(*v)).collect();
    Ok(split_masks(&both, &off))
}

/// Interactive co-segmentation. `scribbles[k]` annotates image `k` when present.
///
/// Stage one refines each scribbled image: the UDS of its foreground scribbles minus the UDS of
/// its background scribbles becomes the foreground set, and vice versa; affinities between the
/// two sets are then zeroed. Stage two repeats the two extractions on the joint graph of all
/// images with the refined sets, and the final foreground is the first UDS minus the second.
pub fn coseg_interactive(
    images: &[CosegInstance],
    scribbles: &[Option<Annotation>],
    solver: &SolverParams,
) -> Result<CosegOutput> {
    if images.len() != scribbles.len() {
        return Err(CdsError::DimensionMismatch {
            expected: format!("{} scribble entries", images.len()),
            found: format!("{}", scribbles.len()),
        });
    }
    if scribbles.iter().all(Option::is_none) {
        return Err(invalid("scribbles", "at least one image must be scribbled"));
    }
    let (joint, off) = coseg_affinity(images)?;
    let mut m = joint.into_matrix();
    let mut warnings = Vec::new();
    let mut fg_all = Vec::new();
    let mut bg_all = Vec::new();
    for (k, ann) in scribbles.iter().enumerate() {
        let Some(ann) = ann else { continue };
        let n = images[k].n();
        ann.validate(n)?;
        let (fg, bg, conflicts) = ann.split();
        if !conflicts.is_empty() {
            warnings.push(format!("image {k}: dropped conflicting labels on {conflicts:?}"));
        }
        if fg.is_empty() || bg.is_empty() {
            return Err(invalid(
                "scribbles",
                format!("image {k} needs foreground and background scribbles"),
            ));
        }
        let idx: Vec<usize> = (off[k]..off[k + 1]).collect();
        let local = AffinityMatrix::new(crate::graph::principal_submatrix(&m, &idx))?;
        let o1 = peel_off_extract(&local, &fg, solver)?.union_support;
        let o2 = peel_off_extract(&local, &bg, solver)?.union_support;
        let fs: Vec<usize> = o1.iter().copied().filter(|v| o2.binary_search(v).is_err()).collect();
        let bs: Vec<usize> = o2.iter().copied().filter(|v| o1.binary_search(v).is_err()).collect();
        let (fs, bs) = (if fs.is_empty() { fg } else { fs }, if bs.is_empty() { bg } else { bs });
        for &f in &fs {
            for &b in &bs {
                m[(off[k] + f, off[k] + b)] = 0.0;
                m[(off[k] + b, off[k] + f)] = 0.0;
            }
        }
        fg_all.extend(fs.iter().map(|v| v + off[k]));
        bg_all.extend(bs.iter().map(|v| v + off[k]));
    }
    let a = AffinityMatrix::new(m)?;
    let o1 = peel_off_extract(&a, &fg_all, solver)?.union_support;
    let o2 = peel_off_extract(&a, &bg_all, solver)?.union_support;
    let fg: Vec<usize> = o1.into_iter().filter(|v| o2.binary_search(v).is_err()).collect();
    let mut out = split_masks(&fg, &off);
    warnings.append(&mut out.warnings);
    out.warnings = warnings;
    Ok(out)
}

fn split_masks(ids: &[usize], off: &[usize]) -> CosegOutput {
    let masks: Vec<Vec<usize>> = off
        .windows(2)
        .map(|w| {
            ids.iter()
                .filter(|&&v| v >= w[0] && v < w[1])
                .map(|v| v - w[0])
                .collect()
        })
        .collect();
    let warnings = if ids.is_empty() {
        vec!["no common foreground found; masks are empty".to_string()]
    } else {
        Vec::new()
    };
    CosegOutput { masks, warnings }
}

//! Reference graphs and seeded synthetic datasets.

use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dcds::MiniBatch;
use crate::graph::{AffinityMatrix, FeatureTable};
use crate::segmentation::{Adjacency, CosegInstance, SegmentationInstance};

/// Edges of the eight-vertex fixture, using vertex labels 1 to 8.
pub const G8_EDGES: [(usize, usize); 8] = [(1, 2), (2, 3), (4, 5), (5, 6), (5, 7), (5, 8), (6, 8), (7, 8)];

/// The unit-weight fixture graph. Vertex label `k` is stored at index `k - 1`.
pub fn g8() -> AffinityMatrix {
    let edges: Vec<(usize, usize, f64)> = G8_EDGES.iter().map(|&(i, j)| (i - 1, j - 1, 1.0)).collect();
    AffinityMatrix::from_edges(8, &edges).expect("fixture edges are valid")
}

/// Converts 1-based fixture labels to indices.
pub fn g8_vertices(labels: &[usize]) -> Vec<usize> {
    labels.iter().map(|l| l - 1).collect()
}

/// Converts indices back to sorted 1-based fixture labels.
pub fn g8_labels(idx: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = idx.iter().map(|i| i + 1).collect();
    v.sort_unstable();
    v
}

/// Isotropic Gaussian blobs, `per_blob` points around each center. Labels are blob indices.
pub fn gaussian_blobs(centers: &[Vec<f64>], per_blob: usize, std: f64, seed: u64) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, std).expect("valid standard deviation");
    let mut rows = Vec::with_capacity(centers.len() * per_blob);
    let mut labels = Vec::with_capacity(rows.capacity());
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_blob {
            rows.push(center.iter().map(|v| v + noise.sample(&mut rng)).collect::<Vec<f64>>());
            labels.push(c);
        }
    }
    FeatureTable::from_rows(&rows)
        .and_then(|f| f.with_labels(labels))
        .expect("blob features are finite")
}

/// Thirty 2-D points in three partly overlapping blobs of ten.
pub fn three_blobs(seed: u64) -> FeatureTable {
    let centers = [vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.85]];
    gaussian_blobs(&centers, 10, 0.15, seed)
}

/// Symmetric random affinity with weights drawn from `U[0, 1]` and a zero diagonal.
pub fn random_affinity(n: usize, seed: u64) -> AffinityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let w: f64 = rng.random();
            m[(i, j)] = w;
            m[(j, i)] = w;
        }
    }
    AffinityMatrix::new(m).expect("random affinity is valid")
}

/// Erdos-Renyi graph with unit weights and edge probability `p`.
pub fn random_binary_graph(n: usize, p: f64, seed: u64) -> AffinityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                m[(i, j)] = 1.0;
                m[(j, i)] = 1.0;
            }
        }
    }
    AffinityMatrix::new(m).expect("binary graph is valid")
}

/// Similarity that separates classes perfectly: `U[0.85, 1]` within a class and `U[0, 0.4]`
/// across classes.
pub fn class_pure_channel(labels: &[usize], seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = labels.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = if labels[i] == labels[j] {
                rng.random_range(0.85..=1.0)
            } else {
                rng.random_range(0.0..=0.4)
            };
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Each row of `m` with its off-diagonal scores randomly permuted, so every query keeps its
/// score distribution but loses its ranking. The result is not symmetric.
pub fn shuffled_channel(m: &DMatrix<f64>, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let cols: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let mut values: Vec<f64> = cols.iter().map(|&j| m[(i, j)]).collect();
        values.shuffle(&mut rng);
        for (&j, v) in cols.iter().zip(values) {
            out[(i, j)] = v;
        }
    }
    out
}

/// Gaussian similarity of points drawn around one center per class with spread `noise`.
pub fn planted_channel(labels: &[usize], noise: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let dims = 4;
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dims).map(|_| rng.random_range(0.0..2.0)).collect())
        .collect();
    let jitter = Normal::new(0.0, noise).expect("valid noise");
    let pts: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| centers[l].iter().map(|c| c + jitter.sample(&mut rng)).collect())
        .collect();
    let n = labels.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let d2: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum();
            (-d2).exp()
        }
    })
}

/// A planted foreground/background instance on an 8x8 superpixel grid with scribble pools.
#[derive(Debug, Clone)]
pub struct SegmentationFixture {
    pub instance: SegmentationInstance,
    /// Foreground scribbles placed by a careful user.
    pub fg_scribbles: Vec<usize>,
    /// Background scribbles away from the object.
    pub bg_scribbles: Vec<usize>,
    /// Background superpixels touching the object, where erroneous scribbles land.
    pub error_zone: Vec<usize>,
}

impl SegmentationFixture {
    pub fn ground_truth(&self) -> &[bool] {
        self.instance.ground_truth.as_deref().expect("fixture has ground truth")
    }

    /// Correct scribbles plus `round(fraction * |fg scribbles|)` erroneous foreground scribbles
    /// drawn from the error zone.
    pub fn scribbles_with_errors(&self, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = ((fraction * self.fg_scribbles.len() as f64).round() as usize).min(self.error_zone.len());
        let mut fg = self.fg_scribbles.clone();
        fg.extend(self.error_zone.choose_multiple(&mut rng, k));
        fg.sort_unstable();
        (fg, self.bg_scribbles.clone())
    }
}

pub fn planted_segmentation(seed: u64) -> SegmentationFixture {
    let (rows, cols) = (8, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.04).expect("valid noise");
    let n = rows * cols;
    let fg: Vec<bool> = (0..n)
        .map(|i| (2..6).contains(&(i / cols)) && (2..6).contains(&(i % cols)))
        .collect();
    let rows_f: Vec<Vec<f64>> = fg
        .iter()
        .map(|&f| {
            let c = if f { [0.8, 0.2, 0.3] } else { [0.2, 0.6, 0.7] };
            c.iter().map(|v| v + noise.sample(&mut rng)).collect()
        })
        .collect();
    let adjacency = Adjacency::grid(rows, cols);
    let error_zone: Vec<usize> = (0..n)
        .filter(|&i| !fg[i] && (0..n).any(|j| fg[j] && adjacency.adjacent(i, j)))
        .collect();
    let fg_ids: Vec<usize> = (0..n).filter(|&i| fg[i]).collect();
    let far_bg: Vec<usize> = (0..n).filter(|&i| !fg[i] && !error_zone.contains(&i)).collect();
    let mut fg_scribbles: Vec<usize> = fg_ids.choose_multiple(&mut rng, 4).copied().collect();
    let mut bg_scribbles: Vec<usize> = far_bg.choose_multiple(&mut rng, 6).copied().collect();
    fg_scribbles.sort_unstable();
    bg_scribbles.sort_unstable();
    let pixels: Vec<f64> = (0..n).map(|_| rng.random_range(50.0..150.0_f64).round()).collect();
    let instance = SegmentationInstance::new(
        FeatureTable::from_rows(&rows_f).expect("finite features"),
        adjacency,
        Some(pixels),
        Some(fg),
    )
    .expect("consistent fixture");
    SegmentationFixture {
        instance,
        fg_scribbles,
        bg_scribbles,
        error_zone,
    }
}

/// One image of a planted co-segmentation set: a 6x6 grid with a 2x2 red object at
/// `(row, col)` over cluttered background.
pub fn planted_coseg_image(row: usize, col: usize, seed: u64) -> CosegInstance {
    let (h, w) = (6, 6);
    let n = h * w;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).expect("valid noise");
    let obj: Vec<bool> = (0..n)
        .map(|i| (row..row + 2).contains(&(i / w)) && (col..col + 2).contains(&(i % w)))
        .collect();
    let mut color = Vec::with_capacity(n);
    let mut sift = Vec::with_capacity(n);
    let mut hog = Vec::with_capacity(n);
    let mut objectness = Vec::with_capacity(n);
    for &o in &obj {
        let c: Vec<f64> = if o {
            [1.0, 0.0, 0.0].iter().map(|v| v + noise.sample(&mut rng)).collect()
        } else {
            vec![
                rng.random_range(0.0..0.4),
                rng.random_range(0.2..1.0),
                rng.random_range(0.0..1.0),
            ]
        };
        let s: Vec<f64> = if o {
            [1.0, 0.0, 1.0, 0.0]
                .iter()
                .map(|v: &f64| (v + noise.sample(&mut rng)).abs())
                .collect()
        } else {
            (0..4).map(|_| rng.random_range(0.0..1.0)).collect()
        };
        hog.push(
            c[..2]
                .iter()
                .map(|v| v + if o { noise.sample(&mut rng) } else { 0.0 })
                .collect::<Vec<f64>>(),
        );
        color.push(c);
        sift.push(s);
        objectness.push(if o {
            rng.random_range(0.7..1.0)
        } else {
            rng.random_range(0.0..0.3)
        });
    }
    CosegInstance {
        color: FeatureTable::from_rows(&color).expect("finite"),
        sift: FeatureTable::from_rows(&sift).expect("finite"),
        hog: FeatureTable::from_rows(&hog).expect("finite"),
        adjacency: Adjacency::grid(h, w),
        objectness,
        ground_truth: Some(obj),
    }
}

/// `k` identities with `omega` items each: identity centers from `N(0, 1)` in `dims`
/// dimensions, items jittered by `N(0, noise)`.
pub fn planted_batch(k: usize, omega: usize, dims: usize, noise: f64, seed: u64) -> MiniBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid");
    let jitter = Normal::new(0.0, noise).expect("valid noise");
    let mut rows = Vec::with_capacity(k * omega);
    let mut labels = Vec::with_capacity(k * omega);
    for id in 0..k {
        let center: Vec<f64> = (0..dims).map(|_| unit.sample(&mut rng)).collect();
        for _ in 0..omega {
            rows.push(center.iter().map(|c| c + jitter.sample(&mut rng)).collect::<Vec<f64>>());
            labels.push(id);
        }
    }
    let features = FeatureTable::from_rows(&rows)
        .and_then(|f| f.with_labels(labels))
        .expect("finite batch");
    MiniBatch::new(features).expect("balanced batch")
}

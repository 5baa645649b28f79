//! Loading and validating inputs. Everything is read before any computation starts.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cdskit::graph::{build_gaussian_affinity, build_self_tuning_affinity, distance_to_similarity};
use cdskit::io::{parse_index_list, read_labels, read_matrix};
use cdskit::segmentation::{Adjacency, CosegInstance};
use cdskit::{AffinityMatrix, DistanceMatrix, FeatureTable};
use clap::Args;
use nalgebra::DMatrix;

pub fn matrix(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix(path).with_context(|| format!("reading {}", path.display()))
}

pub fn labels(path: &Path) -> Result<Vec<usize>> {
    read_labels(path).with_context(|| format!("reading {}", path.display()))
}

pub fn ids(text: &str, what: &str) -> Result<Vec<usize>> {
    parse_index_list(text).with_context(|| format!("parsing {what}"))
}

/// Ids given inline (`1,4,7`) or, with a leading `@`, read from a whitespace-separated file.
pub fn id_source(spec: &str, what: &str) -> Result<Vec<usize>> {
    match spec.strip_prefix('@') {
        Some(path) => labels(Path::new(path)),
        None => ids(spec, what),
    }
}

/// A 0/1 label file as a boolean mask.
pub fn mask(path: &Path) -> Result<Vec<bool>> {
    labels(path)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => bail!("{}: entry {i} is {v}, expected 0 or 1", path.display()),
        })
        .collect()
}

/// Matrix entries read in row-major order as one flat vector.
pub fn vector(path: &Path) -> Result<Vec<f64>> {
    let m = matrix(path)?;
    Ok(m.transpose().iter().copied().collect())
}

pub fn features(path: &Path) -> Result<FeatureTable> {
    FeatureTable::new(matrix(path)?).with_context(|| format!("features in {}", path.display()))
}

pub fn check_ids(ids: &[usize], n: usize, what: &str) -> Result<()> {
    if let Some(i) = ids.iter().find(|&&i| i >= n) {
        bail!("{what}: id {i} is out of range for {n} items");
    }
    Ok(())
}

pub fn check_len<T>(v: &[T], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        bail!("{what}: expected {n} entries, found {}", v.len());
    }
    Ok(())
}

/// Where the graph comes from: an affinity matrix, a distance matrix or a feature table.
#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    /// Symmetric nonnegative affinity matrix with a zero diagonal.
    #[arg(long, conflicts_with_all = ["distance", "features"])]
    pub affinity: Option<PathBuf>,
    /// Distance matrix, converted with exp(-d / 2 sigma^2).
    #[arg(long, conflicts_with = "features")]
    pub distance: Option<PathBuf>,
    /// Feature table with one item per row.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Kernel width for distances and features. Features without it use self-tuning scales.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Neighbor count of the self-tuning scales.
    #[arg(long, default_value_t = 7)]
    pub tune_k: usize,
    /// Rescale distances so the largest is one.
    #[arg(long)]
    pub normalize: bool,
    /// Average a distance matrix with its transpose before use.
    #[arg(long)]
    pub symmetrize: bool,
}

impl GraphArgs {
    pub fn load(&self) -> Result<AffinityMatrix> {
        if let Some(p) = &self.affinity {
            return AffinityMatrix::new(matrix(p)?).with_context(|| format!("affinity in {}", p.display()));
        }
        if let Some(p) = &self.distance {
            let mut d = matrix(p)?;
            if self.symmetrize {
                d = (&d + d.transpose()) / 2.0;
            }
            let mut d = DistanceMatrix::new(d).with_context(|| format!("distances in {}", p.display()))?;
            if self.normalize {
                d = d.normalized();
            }
            let Some(sigma) = self.sigma else {
                bail!("--distance needs --sigma");
            };
            return Ok(distance_to_similarity(&d, sigma)?);
        }
        if let Some(p) = &self.features {
            let f = features(p)?;
            return Ok(match self.sigma {
                Some(s) => build_gaussian_affinity(&f, s)?,
                None => build_self_tuning_affinity(&f, self.tune_k)?,
            });
        }
        bail!("one of --affinity, --distance or --features is required")
    }
}

fn find(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["txt", "bin"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.exists())
}

fn require(dir: &Path, stem: &str) -> Result<PathBuf> {
    find(dir, stem).with_context(|| format!("{} has no {stem}.txt or {stem}.bin", dir.display()))
}

/// One co-segmentation image from a directory holding `color`, `sift`, `hog`, `adjacency` and
/// `objectness` matrices, plus an optional `truth` label file.
pub fn coseg_image(dir: &Path) -> Result<CosegInstance> {
    let adjacency = Adjacency::from_matrix(&matrix(&require(dir, "adjacency")?)?)
        .with_context(|| format!("adjacency in {}", dir.display()))?;
    let image = CosegInstance {
        color: features(&require(dir, "color")?)?,
        sift: features(&require(dir, "sift")?)?,
        hog: features(&require(dir, "hog")?)?,
        adjacency,
        objectness: vector(&require(dir, "objectness")?)?,
        ground_truth: find(dir, "truth").map(|p| mask(&p)).transpose()?,
    };
    image
        .validate()
        .with_context(|| format!("image in {}", dir.display()))?;
    Ok(image)
}

/// Ranked lists, one per line: the query id followed by the ranked gallery ids.
pub fn ranked_lists(path: &Path) -> Result<Vec<cdskit::metrics::RankedList>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ids: Vec<usize> = line
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .with_context(|| format!("{} line {}: not an id: `{t}`", path.display(), i + 1))
            })
            .collect::<Result<_>>()?;
        let Some(&query) = ids.first() else { continue };
        let scores = (0..ids.len()).map(|r| -(r as f64)).collect();
        out.push(cdskit::metrics::RankedList { query, ids, scores });
    }
    Ok(out)
}

//! Retrieval and segmentation metrics.
//!
//! Ranked lists always start with the query itself. Bull's eye and N-S count that self match;
//! mAP and CMC skip it.

use serde::{Deserialize, Serialize};

use crate::error::{CdsError, Result};

/// Gallery ordering for one query. `ids[0]` is the query; the remaining scores are
/// non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query: usize,
    pub ids: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankedList {
    /// Orders every item by `scores` descending with ties broken by index, query first.
    pub fn from_scores(query: usize, scores: &[f64]) -> Self {
        let mut rest: Vec<usize> = (0..scores.len()).filter(|&i| i != query).collect();
        rest.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let ids: Vec<usize> = std::iter::once(query).chain(rest).collect();
        let scores = ids.iter().map(|&i| scores[i]).collect();
        Self { query, ids, scores }
    }

    /// Checks that `ids` is a permutation of `0..n` led by the query.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in &self.ids {
            if i >= n {
                return Err(CdsError::VertexOutOfRange { index: i, n });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(CdsError::DuplicateVertex(i));
            }
        }
        if self.ids.len() != n || self.ids.first() != Some(&self.query) {
            return Err(CdsError::Membership(
                "ranked list must start with the query and cover the gallery".into(),
            ));
        }
        Ok(())
    }

    /// Gallery without the self match.
    pub fn gallery(&self) -> impl Iterator<Item = usize> + '_ {
        self.ids.iter().copied().filter(move |&i| i != self.query)
    }
}

/// Average precision with the query removed from its gallery. `None` without relevant items.
pub fn average_precision(list: &RankedList, labels: &[usize]) -> Option<f64> {
    let class = labels[list.query];
    let total = list.gallery().filter(|&i| labels[i] == class).count();
    if total == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, id) in list.gallery().enumerate() {
        if labels[id] == class {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub map: f64,
    /// Queries without any relevant gallery item.
    pub skipped: usize,
}

pub fn mean_average_precision(lists: &[RankedList], labels: &[usize]) -> MapSummary {
    let aps: Vec<f64> = lists.iter().filter_map(|l| average_precision(l, labels)).collect();
    MapSummary {
        map: mean(&aps),
        skipped: lists.len() - aps.len(),
    }
}

/// Fraction of queries with a relevant item within each rank cutoff, self match excluded.
/// Queries without relevant items are skipped.
pub fn cmc(lists: &[RankedList], labels: &[usize], ranks: &[usize]) -> Vec<f64> {
    let first_hits: Vec<usize> = lists
        .iter()
        .filter_map(|l| {
            let class = labels[l.query];
            l.gallery().position(|i| labels[i] == class).map(|p| p + 1)
        })
        .collect();
    ranks
        .iter()
        .map(|&r| {
            if first_hits.is_empty() {
                0.0
            } else {
                first_hits.iter().filter(|&&h| h <= r).count() as f64 / first_hits.len() as f64
            }
        })
        .collect()
}

/// Mean number of same-class items among the top four, self match included.
pub fn ns_score(lists: &[RankedList], labels: &[usize]) -> f64 {
    let counts: Vec<f64> = lists
        .iter()
        .map(|l| {
            let class = labels[l.query];
            l.ids.iter().take(4).filter(|&&i| labels[i] == class).count() as f64
        })
        .collect();
    mean(&counts)
}

/// Share of the query's class (itself included) found in the top `r` positions.
pub fn bulls_eye(list: &RankedList, labels: &[usize], r: usize) -> f64 {
    let class = labels[list.query];
    let size = labels.iter().filter(|&&l| l == class).count();
    let found = list.ids.iter().take(r).filter(|&&i| labels[i] == class).count();
    found as f64 / size as f64
}

pub fn mean_bulls_eye(lists: &[RankedList], labels: &[usize], r: usize) -> f64 {
    mean(&lists.iter().map(|l| bulls_eye(l, labels, r)).collect::<Vec<_>>())
}

/// Squared F-measure weight used for segmentation.
pub const F_BETA_SQ: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub error_rate: f64,
    pub jaccard: f64,
    pub dsc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// True when pixel counts weighted the sums, false for superpixel counting.
    pub pixel_weighted: bool,
}

/// Overlap metrics between a predicted mask and ground truth over superpixels.
///
/// `weights` are per-superpixel pixel counts; without them each superpixel counts once.
/// `region` restricts the error rate to an evaluation window such as a bounding box.
pub fn segmentation_metrics(
    mask: &[bool],
    truth: &[bool],
    weights: Option<&[f64]>,
    region: Option<&[bool]>,
) -> Result<SegMetrics> {
    let n = truth.len();
    if mask.len() != n || weights.is_some_and(|w| w.len() != n) || region.is_some_and(|r| r.len() != n) {
        return Err(CdsError::DimensionMismatch {
            expected: format!("{n} superpixels"),
            found: "inputs of different lengths".into(),
        });
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut inter = 0.0;
    let mut pred = 0.0;
    let mut gt = 0.0;
    let mut wrong = 0.0;
    let mut area = 0.0;
    for i in 0..n {
        let wi = w(i);
        if mask[i] && truth[i] {
            inter += wi;
        }
        if mask[i] {
            pred += wi;
        }
        if truth[i] {
            gt += wi;
        }
        if region.is_none_or(|r| r[i]) {
            area += wi;
            if mask[i] != truth[i] {
                wrong += wi;
            }
        }
    }
    let union = pred + gt - inter;
    let both_empty = pred == 0.0 && gt == 0.0;
    let ratio = |num: f64, den: f64| {
        if den > 0.0 {
            num / den
        } else if both_empty {
            1.0
        } else {
            0.0
        }
    };
    let precision = ratio(inter, pred);
    let recall = ratio(inter, gt);
    let fden = F_BETA_SQ * precision + recall;
    Ok(SegMetrics {
        error_rate: if area > 0.0 { wrong / area } else { 0.0 },
        jaccard: ratio(inter, union),
        dsc: ratio(2.0 * inter, pred + gt),
        precision,
        recall,
        f_measure: if fden > 0.0 {
            (1.0 + F_BETA_SQ) * precision * recall / fden
        } else {
            0.0
        },
        pixel_weighted: weights.is_some(),
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

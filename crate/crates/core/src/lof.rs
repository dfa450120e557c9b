//! Local Outlier Factor scoring and per-class outlier removal.
//!
//! Exact k-NN with Euclidean distance. The k-neighbourhood of `p` contains
//! every other point within the k-distance of `p`, so ties can make it larger
//! than `k`. Sums over a neighbourhood run in ascending point index.
//!
//! Local reachability density is `1 / (mean reach-dist + LRD_EPS)`. For
//! duplicated points the mean reach-dist is zero, every duplicate gets the
//! same large density, and their density ratios evaluate to exactly 1.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{CalibrationConfig, LabeledEmbeddings};
use crate::error::{Error, Result};
use crate::linalg;

pub const LRD_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LofResult {
    pub scores: Vec<f64>,
    pub neighbors_used: usize,
}

struct Neighborhood {
    k_distance: f64,
    /// (index, distance), ascending index.
    members: Vec<(usize, f64)>,
}

fn neighborhood(points: &[Vec<f64>], p: usize, k: usize) -> Neighborhood {
    let row: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(o, q)| {
            if o == p {
                f64::INFINITY
            } else {
                linalg::dist(&points[p], q)
            }
        })
        .collect();
    let mut sorted = row.clone();
    let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
    let k_distance = *kth;
    let members = row
        .iter()
        .enumerate()
        .filter(|&(o, &d)| o != p && d <= k_distance)
        .map(|(o, &d)| (o, d))
        .collect();
    Neighborhood {
        k_distance,
        members,
    }
}

pub fn lof_scores(points: &[Vec<f64>], k: usize) -> Result<LofResult> {
    let n = points.len();
    if k == 0 {
        return Err(Error::invalid("LOF needs k >= 1"));
    }
    if k >= n {
        return Err(Error::invalid(format!(
            "LOF needs more than k={k} points, got {n}"
        )));
    }
    let hoods: Vec<Neighborhood> = (0..n)
        .into_par_iter()
        .map(|p| neighborhood(points, p, k))
        .collect();
    let lrd: Vec<f64> = hoods
        .par_iter()
        .map(|h| {
            let reach: f64 = h
                .members
                .iter()
                .map(|&(o, d)| hoods[o].k_distance.max(d))
                .sum();
            1.0 / (reach / h.members.len() as f64 + LRD_EPS)
        })
        .collect();
    let scores = hoods
        .par_iter()
        .zip(&lrd)
        .map(|(h, &own)| {
            let total: f64 = h.members.iter().map(|&(o, _)| lrd[o]).sum();
            (total / h.members.len() as f64) / own
        })
        .collect();
    Ok(LofResult {
        scores,
        neighbors_used: k,
    })
}

/// Outcome of LOF filtering for one class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassFilter {
    pub class_id: usize,
    /// Dataset indices of the class members, ascending.
    pub members: Vec<usize>,
    /// Dataset indices kept for estimation, ascending.
    pub preserved: Vec<usize>,
    /// LOF score per member, aligned with `members`; absent when skipped.
    pub scores: Option<Vec<f64>>,
    /// The class had too few members for LOF and was passed through.
    pub skipped: bool,
    /// Thresholding removed every member; the lowest-scoring one was kept.
    pub fallback: bool,
}

/// Runs LOF within each labelled class and keeps members scoring at most
/// `cfg.lof_threshold`.
pub fn filter_classes(data: &LabeledEmbeddings, cfg: &CalibrationConfig) -> Vec<ClassFilter> {
    let k = cfg.lof_neighbors;
    data.class_indices()
        .into_par_iter()
        .enumerate()
        .map(|(class_id, members)| {
            if members.len() <= k {
                if !members.is_empty() {
                    log::warn!(
                        "class {class_id}: {} members <= lof_neighbors {k}, skipping LOF",
                        members.len()
                    );
                }
                return ClassFilter {
                    class_id,
                    preserved: members.clone(),
                    members,
                    scores: None,
                    skipped: true,
                    fallback: false,
                };
            }
            let points: Vec<Vec<f64>> =
                members.iter().map(|&i| data.vectors()[i].clone()).collect();
            let scores = lof_scores(&points, k)
                .expect("class size checked above")
                .scores;
            let mut preserved: Vec<usize> = members
                .iter()
                .zip(&scores)
                .filter(|(_, &s)| s <= cfg.lof_threshold)
                .map(|(&i, _)| i)
                .collect();
            let fallback = preserved.is_empty();
            if fallback {
                let best = scores
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
                    .map(|(j, _)| j)
                    .unwrap_or(0);
                preserved.push(members[best]);
            }
            ClassFilter {
                class_id,
                members,
                preserved,
                scores: Some(scores),
                skipped: false,
                fallback,
            }
        })
        .collect()
}

/// CSV dump of per-point scores: `index,label,score,preserved`. Skipped
/// classes have an empty score field.
pub fn format_lof_dump(filters: &[ClassFilter], data: &LabeledEmbeddings) -> String {
    let mut rows: Vec<(usize, String)> = Vec::with_capacity(data.len());
    for f in filters {
        for (j, &i) in f.members.iter().enumerate() {
            let score = f
                .scores
                .as_ref()
                .map(|s| format!("{:?}", s[j]))
                .unwrap_or_default();
            let kept = f.preserved.binary_search(&i).is_ok();
            rows.push((
                i,
                format!("{i},{},{score},{}", data.labels()[i], u8::from(kept)),
            ));
        }
    }
    rows.sort_by_key(|r| r.0);
    let mut out = String::from("index,label,score,preserved\n");
    for (_, r) in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

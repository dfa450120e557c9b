//! Robust per-class Gaussian estimation and calibration of tail classes
//! with statistics borrowed from nearby head classes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{CalibrationConfig, ClassStats, Disturbance, LabeledEmbeddings};
use crate::error::{Error, Result};
use crate::linalg;

/// Sample mean and Bessel-corrected covariance of each class over its
/// preserved members. A single preserved member yields a zero covariance and
/// sets `degenerate`.
pub fn robust_class_stats(
    data: &LabeledEmbeddings,
    preserved: &[Vec<usize>],
) -> Result<Vec<ClassStats>> {
    if preserved.len() != data.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "{} preserved sets for {} classes",
            preserved.len(),
            data.num_classes()
        )));
    }
    preserved
        .iter()
        .enumerate()
        .map(|(class_id, idx)| {
            if idx.is_empty() {
                return Err(Error::invalid(format!(
                    "class {class_id} has no preserved members"
                )));
            }
            let pts = || idx.iter().map(|&i| data.vectors()[i].as_slice());
            let mean = linalg::mean(data.dim(), pts());
            let covariance = linalg::sample_covariance(&mean, pts());
            let degenerate = idx.len() < 2;
            if degenerate {
                log::warn!("class {class_id}: single preserved member, covariance set to zero");
            }
            Ok(ClassStats {
                class_id,
                count: idx.len(),
                mean,
                covariance,
                degenerate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPartition {
    /// Ascending class ids.
    pub head: Vec<usize>,
    /// Ascending class ids.
    pub tail: Vec<usize>,
    pub counts: Vec<usize>,
}

impl ClassPartition {
    pub fn is_head(&self, k: usize) -> bool {
        self.head.binary_search(&k).is_ok()
    }
}

/// Heads are the shortest prefix of classes, by descending count (ties to
/// the lower id), whose total reaches `head_mass` of all items.
pub fn split_head_tail(counts: &[usize], head_mass: f64) -> ClassPartition {
    let total: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let need = head_mass * total as f64;
    let mut acc = 0usize;
    let mut n_head = 0;
    for &k in &order {
        acc += counts[k];
        n_head += 1;
        if acc as f64 >= need {
            break;
        }
    }
    let mut head = order[..n_head].to_vec();
    let mut tail = order[n_head..].to_vec();
    head.sort_unstable();
    tail.sort_unstable();
    ClassPartition {
        head,
        tail,
        counts: counts.to_vec(),
    }
}

/// The `q` head classes whose means are closest to class `k`, nearest
/// first, ties to the lower id.
pub fn topq_heads(
    stats: &[ClassStats],
    partition: &ClassPartition,
    k: usize,
    q: usize,
) -> Result<Vec<usize>> {
    if q > partition.head.len() {
        return Err(Error::invalid(format!(
            "q={q} exceeds the {} available head classes",
            partition.head.len()
        )));
    }
    let mut ranked: Vec<(f64, usize)> = partition
        .head
        .iter()
        .filter(|&&h| h != k)
        .map(|&h| (linalg::sq_dist(&stats[h].mean, &stats[k].mean), h))
        .collect();
    if q > ranked.len() {
        return Err(Error::invalid(format!(
            "q={q} exceeds the {} head classes other than {k}",
            ranked.len()
        )));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(ranked.into_iter().take(q).map(|(_, h)| h).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DonorWeights {
    pub weights: Vec<f64>,
    /// The formula was undefined and uniform weights were used.
    pub uniform_fallback: bool,
}

/// `ω_c = n_c ‖μ_c − μ_k‖² / Σ_j n_j ‖μ_j − μ_k‖²` over `donors`, or
/// `∝ n_c / ‖μ_c − μ_k‖²` when `invert` is set.
pub fn donor_weights(
    stats: &[ClassStats],
    counts: &[usize],
    donors: &[usize],
    k: usize,
    invert: bool,
) -> Result<DonorWeights> {
    if donors.is_empty() {
        return Err(Error::invalid("donor set is empty"));
    }
    if let Some(&c) = donors.iter().find(|&&c| counts[c] == 0) {
        return Err(Error::invalid(format!("donor class {c} has zero count")));
    }
    let d2: Vec<f64> = donors
        .iter()
        .map(|&c| linalg::sq_dist(&stats[c].mean, &stats[k].mean))
        .collect();
    let n: Vec<f64> = donors.iter().map(|&c| counts[c] as f64).collect();

    let raw: Vec<f64> = if !invert {
        n.iter().zip(&d2).map(|(n, d)| n * d).collect()
    } else if d2.contains(&0.0) {
        // Coincident donors take all the weight, split by size.
        n.iter()
            .zip(&d2)
            .map(|(&n, &d)| if d == 0.0 { n } else { 0.0 })
            .collect()
    } else {
        n.iter().zip(&d2).map(|(n, d)| n / d).collect()
    };
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        log::warn!("class {k}: all donor distances are zero, using uniform weights");
        let w = 1.0 / donors.len() as f64;
        return Ok(DonorWeights {
            weights: vec![w; donors.len()],
            uniform_fallback: true,
        });
    }
    Ok(DonorWeights {
        weights: raw.iter().map(|r| r / total).collect(),
        uniform_fallback: invert && d2.contains(&0.0),
    })
}

/// Calibrated Gaussian of one class. Head classes carry their base
/// estimate unchanged and an empty donor set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedStats {
    pub base: ClassStats,
    pub calibrated_mean: Vec<f64>,
    #[serde(with = "linalg::rows")]
    pub calibrated_cov: DMatrix<f64>,
    pub donors: Vec<usize>,
    pub weights: Vec<f64>,
    pub is_tail: bool,
    #[serde(default)]
    pub uniform_fallback: bool,
}

impl CalibratedStats {
    pub fn passthrough(base: ClassStats) -> Self {
        Self {
            calibrated_mean: base.mean.clone(),
            calibrated_cov: base.covariance.clone(),
            base,
            donors: Vec::new(),
            weights: Vec::new(),
            is_tail: false,
            uniform_fallback: false,
        }
    }
}

fn disturbance(kind: Disturbance, dim: usize) -> DMatrix<f64> {
    match kind {
        Disturbance::Ones => DMatrix::from_element(dim, dim, 1.0),
        Disturbance::Identity => DMatrix::identity(dim, dim),
    }
}

/// Calibrates every tail class:
///
/// ```text
/// μ'_k = γ Σ_c ω_c μ_c + (1-γ) μ_k
/// Σ'_k = γ Σ_c ω_c Σ_c + (1-γ) Σ_k + α D
/// ```
///
/// over the `q` nearest head classes `c`, with `D` the all-ones matrix (or
/// the identity, per `cfg.disturbance`). `counts` are the class sizes used in
/// the donor weights.
pub fn calibrate_tail(
    stats: &[ClassStats],
    counts: &[usize],
    partition: &ClassPartition,
    cfg: &CalibrationConfig,
) -> Result<Vec<CalibratedStats>> {
    cfg.validate()?;
    if stats.len() != counts.len() || partition.counts.len() != counts.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} stats, {} counts, {} partitioned classes",
            stats.len(),
            counts.len(),
            partition.counts.len()
        )));
    }
    if !partition.tail.is_empty() && cfg.q > partition.head.len() {
        return Err(Error::invalid(format!(
            "q={} exceeds the {} head classes",
            cfg.q,
            partition.head.len()
        )));
    }
    let gamma = cfg.gamma;
    stats
        .iter()
        .enumerate()
        .map(|(k, base)| {
            if partition.is_head(k) {
                return Ok(CalibratedStats::passthrough(base.clone()));
            }
            let dim = base.dim();
            let donors = topq_heads(stats, partition, k, cfg.q)?;
            let w = donor_weights(stats, counts, &donors, k, cfg.invert_weights)?;

            let mut borrowed_mean = vec![0.0; dim];
            let mut borrowed_cov = DMatrix::<f64>::zeros(dim, dim);
            for (&c, &wc) in donors.iter().zip(&w.weights) {
                for (acc, x) in borrowed_mean.iter_mut().zip(&stats[c].mean) {
                    *acc += wc * x;
                }
                borrowed_cov += &stats[c].covariance * wc;
            }
            let calibrated_mean = borrowed_mean
                .iter()
                .zip(&base.mean)
                .map(|(b, own)| gamma * b + (1.0 - gamma) * own)
                .collect();
            let calibrated_cov = borrowed_cov * gamma
                + &base.covariance * (1.0 - gamma)
                + disturbance(cfg.disturbance, dim) * cfg.alpha;
            Ok(CalibratedStats {
                base: base.clone(),
                calibrated_mean,
                calibrated_cov,
                donors,
                weights: w.weights,
                is_tail: true,
                uniform_fallback: w.uniform_fallback,
            })
        })
        .collect()
}

/// Coefficients `(per donor, own)` of the equal-weight calibrated mean.
///
/// The donor set together with the class itself has `q = donors + 1`
/// members, giving `τ / (1 + (q-1) τ)` per donor and `1 / (1 + (q-1) τ)` for
/// the class's own estimate.
pub fn uniform_coefficients(num_donors: usize, tau: f64) -> (f64, f64) {
    let denom = 1.0 + num_donors as f64 * tau;
    (tau / denom, 1.0 / denom)
}

/// Equal-weight calibrated mean of class `k` over `donors`.
pub fn uniform_calibrated_mean(
    means: &[Vec<f64>],
    donors: &[usize],
    k: usize,
    tau: f64,
) -> Result<Vec<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!("tau must be >= 0, got {tau}")));
    }
    let donors: Vec<usize> = donors.iter().copied().filter(|&j| j != k).collect();
    let (per_donor, own) = uniform_coefficients(donors.len(), tau);
    let mut out: Vec<f64> = means[k].iter().map(|x| own * x).collect();
    for &j in &donors {
        for (acc, x) in out.iter_mut().zip(&means[j]) {
            *acc += per_donor * x;
        }
    }
    Ok(out)
}

/// Everything `calibrate` writes to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub dim: usize,
    pub num_classes: usize,
    pub config: CalibrationConfig,
    pub partition: ClassPartition,
    pub classes: Vec<CalibratedStats>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stat(class_id: usize, mean: Vec<f64>, cov: &[f64]) -> ClassStats {
        let dim = mean.len();
        ClassStats {
            class_id,
            count: 10,
            mean,
            covariance: DMatrix::from_row_slice(dim, dim, cov),
            degenerate: false,
        }
    }

    #[test]
    fn two_point_and_identical_stats() {
        let d = LabeledEmbeddings::new(
            2,
            2,
            vec![
                vec![0.0, 0.0],
                vec![2.0, 0.0],
                vec![3.0, 3.0],
                vec![3.0, 3.0],
            ],
            vec![0, 0, 1, 1],
        )
        .unwrap();
        let s = robust_class_stats(&d, &[vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(s[0].mean, vec![1.0, 0.0]);
        assert_eq!(
            s[0].covariance,
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])
        );
        assert_eq!(s[1].covariance, DMatrix::zeros(2, 2));

        let s = robust_class_stats(&d, &[vec![0], vec![2, 3]]).unwrap();
        assert!(s[0].degenerate);
        assert_eq!(s[0].covariance, DMatrix::zeros(2, 2));
        assert!(robust_class_stats(&d, &[vec![], vec![2]]).is_err());
    }

    #[test]
    fn head_tail_prefix_rule() {
        let p = split_head_tail(&[50, 30, 20], 0.5);
        assert_eq!((p.head, p.tail), (vec![0], vec![1, 2]));
        let p = split_head_tail(&[40, 40, 20], 0.5);
        assert_eq!((p.head, p.tail), (vec![0, 1], vec![2]));
        let p = split_head_tail(&[7; 10], 0.5);
        assert_eq!(p.head, vec![0, 1, 2, 3, 4]);
        let p = split_head_tail(&[20, 40, 40], 0.5);
        assert_eq!((p.head, p.tail), (vec![1, 2], vec![0]));
    }

    fn line_stats() -> (Vec<ClassStats>, ClassPartition) {
        // Tail class 0 at the origin; heads at distance 1, 2, 3, and a tie.
        let id = [1.0, 0.0, 0.0, 1.0];
        let stats = vec![
            stat(0, vec![0.0, 0.0], &id),
            stat(1, vec![3.0, 0.0], &id),
            stat(2, vec![0.0, 1.0], &id),
            stat(3, vec![-2.0, 0.0], &id),
        ];
        let partition = ClassPartition {
            head: vec![1, 2, 3],
            tail: vec![0],
            counts: vec![1, 10, 10, 10],
        };
        (stats, partition)
    }

    #[test]
    fn topq_order_and_limits() {
        let (stats, p) = line_stats();
        assert_eq!(topq_heads(&stats, &p, 0, 2).unwrap(), vec![2, 3]);
        assert_eq!(topq_heads(&stats, &p, 0, 3).unwrap(), vec![2, 3, 1]);
        assert!(topq_heads(&stats, &p, 0, 4).is_err());

        let mut tied = stats.clone();
        tied[3].mean = vec![0.0, -1.0];
        assert_eq!(topq_heads(&tied, &p, 0, 1).unwrap(), vec![2]);
    }

    #[test]
    fn donor_weight_fixtures() {
        let stats = vec![
            stat(0, vec![0.0], &[1.0]),
            stat(1, vec![1.0], &[1.0]),
            stat(2, vec![3f64.sqrt()], &[1.0]),
        ];
        let w = donor_weights(&stats, &[5, 100, 100], &[1, 2], 0, false).unwrap();
        assert!((w.weights[0] - 0.25).abs() < 1e-15 && (w.weights[1] - 0.75).abs() < 1e-15);

        let w = donor_weights(&stats, &[5, 100, 100], &[2], 0, false).unwrap();
        assert_eq!(w.weights, vec![1.0]);

        let w = donor_weights(&stats, &[5, 300, 100], &[1, 2], 0, false).unwrap();
        assert!((w.weights[0] - 0.5).abs() < 1e-12 && (w.weights[1] - 0.5).abs() < 1e-12);

        let same = vec![stat(0, vec![2.0], &[1.0]), stat(1, vec![2.0], &[1.0])];
        let w = donor_weights(&same, &[5, 10], &[1], 0, false).unwrap();
        assert!(w.uniform_fallback);
        assert_eq!(w.weights, vec![1.0]);

        // Inverted: nearer donors weigh more.
        let w = donor_weights(&stats, &[5, 100, 100], &[1, 2], 0, true).unwrap();
        assert!((w.weights[0] - 0.75).abs() < 1e-15 && (w.weights[1] - 0.25).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(
            means in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 2..8),
            sizes in prop::collection::vec(1usize..10_000, 8),
            invert: bool,
        ) {
            let stats: Vec<ClassStats> = means
                .iter()
                .enumerate()
                .map(|(k, m)| stat(k, m.clone(), &[0.0; 9]))
                .collect();
            let donors: Vec<usize> = (1..stats.len()).collect();
            let w = donor_weights(&stats, &sizes[..stats.len()], &donors, 0, invert).unwrap();
            prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.weights.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn calibration_limits() {
        let (stats, p) = line_stats();
        let counts = p.counts.clone();
        let cfg = CalibrationConfig {
            q: 2,
            gamma: 0.0,
            alpha: 0.0,
            ..Default::default()
        };
        let out = calibrate_tail(&stats, &counts, &p, &cfg).unwrap();
        for (o, s) in out.iter().zip(&stats) {
            assert_eq!(o.calibrated_mean, s.mean);
            assert_eq!(o.calibrated_cov, s.covariance);
        }

        let mut stats1 = stats.clone();
        stats1[2].covariance = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let cfg = CalibrationConfig {
            q: 1,
            gamma: 1.0,
            alpha: 0.0,
            ..Default::default()
        };
        let out = calibrate_tail(&stats1, &counts, &p, &cfg).unwrap();
        assert_eq!(out[0].donors, vec![2]);
        assert_eq!(out[0].calibrated_mean, stats1[2].mean);
        assert_eq!(out[0].calibrated_cov, stats1[2].covariance);
        for h in 1..4 {
            assert_eq!(out[h], CalibratedStats::passthrough(stats1[h].clone()));
        }

        let cfg = CalibrationConfig {
            q: 4,
            ..Default::default()
        };
        assert!(calibrate_tail(&stats, &counts, &p, &cfg).is_err());
    }

    #[test]
    fn alpha_shifts_every_entry() {
        let (stats, p) = line_stats();
        let run = |alpha, kind| {
            let cfg = CalibrationConfig {
                q: 3,
                gamma: 0.3,
                alpha,
                disturbance: kind,
                ..Default::default()
            };
            calibrate_tail(&stats, &p.counts, &p, &cfg).unwrap()[0]
                .calibrated_cov
                .clone()
        };
        let diff = run(0.25, Disturbance::Ones) - run(0.0, Disturbance::Ones);
        assert!(diff.iter().all(|d| (d - 0.25).abs() < 1e-12));
        let diff = run(0.25, Disturbance::Identity) - run(0.0, Disturbance::Identity);
        assert!((diff - DMatrix::identity(2, 2) * 0.25).amax() < 1e-12);
    }

    #[test]
    fn uniform_mean_coefficients() {
        let means = vec![
            vec![0.0, 4.0],
            vec![2.0, 0.0],
            vec![4.0, 0.0],
            vec![6.0, 8.0],
        ];
        assert_eq!(
            uniform_calibrated_mean(&means, &[1, 2], 0, 0.0).unwrap(),
            means[0]
        );
        assert_eq!(
            uniform_calibrated_mean(&means, &[1], 0, 1.0).unwrap(),
            vec![1.0, 2.0]
        );
        assert_eq!(uniform_coefficients(3, 1.0), (0.25, 0.25));
        assert_eq!(uniform_coefficients(1, 1.0), (0.5, 0.5));
        let three = uniform_calibrated_mean(&means, &[1, 2, 3], 0, 1.0).unwrap();
        assert_eq!(three, vec![3.0, 3.0]);
        assert!(uniform_calibrated_mean(&means, &[1], 0, -1.0).is_err());
    }
}

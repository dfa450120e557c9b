//! Long-tail subsampling, class-size-dependent label noise, and synthetic
//! Gaussian data.

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{CorruptionSpec, GroundTruthModel, LabeledEmbeddings};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::sample::MvnSampler;

/// Per-class sizes `round(base * ρ^(-k/(K-1)))`, ties to even, at least 1.
pub fn longtail_counts(spec: &CorruptionSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let k_last = (spec.num_classes - 1) as f64;
    Ok((0..spec.num_classes)
        .map(|k| {
            let raw = spec.base_count as f64 * spec.imbalance_ratio.powf(-(k as f64) / k_last);
            (raw.round_ties_even() as usize).max(1)
        })
        .collect())
}

/// Keeps `counts[k]` uniformly chosen items of each class, then shuffles.
pub fn subsample_longtail(
    data: &LabeledEmbeddings,
    counts: &[usize],
    rng: &mut RandomStream,
) -> Result<LabeledEmbeddings> {
    if counts.len() != data.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "{} counts for {} classes",
            counts.len(),
            data.num_classes()
        )));
    }
    let mut keep = Vec::with_capacity(counts.iter().sum());
    for (k, members) in data.class_indices().into_iter().enumerate() {
        if counts[k] > members.len() {
            return Err(Error::invalid(format!(
                "class {k} has {} items, {} requested",
                members.len(),
                counts[k]
            )));
        }
        let chosen = index::sample(rng, members.len(), counts[k]);
        keep.extend(chosen.into_iter().map(|i| members[i]));
    }
    keep.shuffle(rng);
    data.select(&keep)
}

/// Which off-diagonal flip law a transition matrix follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipLaw {
    /// `T_ii = 1-η`, `T_ij = η n_j / (n - n_i)`. Used to corrupt datasets.
    ExcludeSelf,
    /// `T_ij = η n_j / n` for `j ≠ i`, `T_ii = 1 - η (1 - n_i / n)`. The
    /// population law assumed by the estimation-error analysis.
    Population,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    #[serde(with = "crate::linalg::rows")]
    pub entries: DMatrix<f64>,
    pub counts: Vec<usize>,
    pub noise_rate: f64,
    pub law: FlipLaw,
}

impl TransitionMatrix {
    pub fn new(counts: &[usize], eta: f64, law: FlipLaw) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::invalid(format!(
                "noise rate must lie in [0, 1), got {eta}"
            )));
        }
        if counts.contains(&0) {
            return Err(Error::invalid("class counts must be positive"));
        }
        let k = counts.len();
        let n: usize = counts.iter().sum();
        let nf = n as f64;
        let entries = DMatrix::from_fn(k, k, |i, j| match law {
            FlipLaw::ExcludeSelf if i == j => 1.0 - eta,
            FlipLaw::ExcludeSelf => counts[j] as f64 / (n - counts[i]) as f64 * eta,
            FlipLaw::Population if i == j => 1.0 - eta * (1.0 - counts[i] as f64 / nf),
            FlipLaw::Population => eta * counts[j] as f64 / nf,
        });
        Ok(Self {
            entries,
            counts: counts.to_vec(),
            noise_rate: eta,
            law,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.entries.row(i).iter().copied().collect()
    }

    /// Draws a noisy label for true label `i`.
    pub fn flip<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let k = self.num_classes();
        for j in 0..k {
            acc += self.entries[(i, j)];
            if u < acc {
                return j;
            }
        }
        // u landed in the rounding gap above the last cumulative sum.
        (0..k)
            .rev()
            .find(|&j| self.entries[(i, j)] > 0.0)
            .unwrap_or(i)
    }
}

/// The corruption transition used for experiments (exclude-self law).
pub fn build_transition(counts: &[usize], eta: f64) -> Result<TransitionMatrix> {
    TransitionMatrix::new(counts, eta, FlipLaw::ExcludeSelf)
}

/// Resamples every label from its row of `transition`. Returns the noisy
/// dataset and, separately, the clean labels.
pub fn inject_noise(
    data: &LabeledEmbeddings,
    transition: &TransitionMatrix,
    rng: &mut RandomStream,
) -> Result<(LabeledEmbeddings, Vec<usize>)> {
    if transition.num_classes() != data.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "transition over {} classes, dataset has {}",
            transition.num_classes(),
            data.num_classes()
        )));
    }
    let clean = data.labels().to_vec();
    let noisy = clean.iter().map(|&y| transition.flip(y, rng)).collect();
    Ok((data.with_labels(noisy)?, clean))
}

/// Draws exactly `counts[k]` points from `N(μ_k, Σ)` for each class, in class
/// order. Class `k` uses the child stream `class-k`.
pub fn synth_gaussian(model: &GroundTruthModel, rng: &RandomStream) -> Result<LabeledEmbeddings> {
    model.validate()?;
    let mut vectors = Vec::with_capacity(model.total());
    let mut labels = Vec::with_capacity(model.total());
    for (k, mean) in model.means.iter().enumerate() {
        let sampler = MvnSampler::new(mean, &model.shared_covariance)?;
        let mut stream = rng.child_indexed("class", k);
        for _ in 0..model.counts[k] {
            vectors.push(sampler.draw(&mut stream));
            labels.push(k);
        }
    }
    LabeledEmbeddings::new(model.dim(), model.num_classes(), vectors, labels)
}

/// `K` class means with i.i.d. `N(0, scale²)` coordinates.
pub fn random_means(
    num_classes: usize,
    dim: usize,
    scale: f64,
    rng: &mut RandomStream,
) -> Vec<Vec<f64>> {
    (0..num_classes)
        .map(|_| {
            (0..dim)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// Output of [`corrupt`].
#[derive(Debug, Clone)]
pub struct Corrupted {
    pub data: LabeledEmbeddings,
    pub clean_labels: Vec<usize>,
    pub transition: TransitionMatrix,
    pub report: CorruptionReport,
}

/// Summary written next to corrupted datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionReport {
    pub imbalance_ratio: Option<f64>,
    pub noise_rate: f64,
    pub realized_counts: Vec<usize>,
    pub noisy_counts: Vec<usize>,
    pub empirical_noise_rate: f64,
}

/// Optional long-tail subsampling (stream `subsample`) followed by label
/// noise (stream `noise`), both derived from `rng`.
pub fn corrupt(
    data: &LabeledEmbeddings,
    spec: Option<&CorruptionSpec>,
    eta: f64,
    rng: &RandomStream,
) -> Result<Corrupted> {
    let (subsampled, ratio) = match spec {
        Some(spec) => {
            let counts = longtail_counts(spec)?;
            let mut stream = rng.child("subsample");
            (
                subsample_longtail(data, &counts, &mut stream)?,
                Some(spec.imbalance_ratio),
            )
        }
        None => (data.clone(), None),
    };
    let realized_counts = subsampled.class_counts();
    let transition = build_transition(&realized_counts, eta)?;
    let mut stream = rng.child("noise");
    let (noisy, clean_labels) = inject_noise(&subsampled, &transition, &mut stream)?;
    let flips = noisy
        .labels()
        .iter()
        .zip(&clean_labels)
        .filter(|(a, b)| a != b)
        .count();
    let report = CorruptionReport {
        imbalance_ratio: ratio,
        noise_rate: eta,
        realized_counts,
        noisy_counts: noisy.class_counts(),
        empirical_noise_rate: flips as f64 / noisy.len() as f64,
    };
    Ok(Corrupted {
        data: noisy,
        clean_labels,
        transition,
        report,
    })
}

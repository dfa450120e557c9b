//! Multivariate normal sampling and class rebalancing.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calibrate::CalibratedStats;
use crate::data::LabeledEmbeddings;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::RandomStream;

/// Draws from `N(mean, cov)` as `mean + E * sqrt(Λ) * u` with `cov = E Λ Eᵀ`.
///
/// An eigendecomposition is used instead of Cholesky so that semidefinite
/// covariances (singular tail estimates, rank-one disturbances) are accepted.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: DVector<f64>,
    transform: DMatrix<f64>,
}

impl MvnSampler {
    pub fn new(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::ShapeMismatch(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let eig = linalg::psd_eigen(cov)?;
        let scales = eig.eigenvalues.map(f64::sqrt);
        let transform = eig.eigenvectors * DMatrix::from_diagonal(&scales);
        Ok(Self {
            mean: DVector::from_column_slice(mean),
            transform,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u = DVector::<f64>::from_fn(self.dim(), |_, _| rng.sample(StandardNormal));
        (&self.mean + &self.transform * u).as_slice().to_vec()
    }
}

pub fn sample_mvn(
    mean: &[f64],
    cov: &DMatrix<f64>,
    count: usize,
    rng: &mut RandomStream,
) -> Result<Vec<Vec<f64>>> {
    let sampler = MvnSampler::new(mean, cov)?;
    Ok((0..count).map(|_| sampler.draw(rng)).collect())
}

/// Per-class size to top classes up to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceTarget {
    /// Size of the largest class.
    #[default]
    Max,
    #[serde(untagged)]
    Count(usize),
}

impl std::str::FromStr for BalanceTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(BalanceTarget::Max),
            n => n
                .parse()
                .map(BalanceTarget::Count)
                .map_err(|_| Error::invalid(format!("target must be `max` or a count, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Balanced {
    pub data: LabeledEmbeddings,
    /// True for appended synthetic points. Original points come first, in
    /// their original order.
    pub synthetic_mask: Vec<bool>,
}

/// Tops every class up to `target` with draws from its calibrated Gaussian.
///
/// Class `k` draws from the child stream `class-k` of `rng`, so results do
/// not depend on the order classes are processed in.
pub fn balance_dataset(
    data: &LabeledEmbeddings,
    stats: &[CalibratedStats],
    target: BalanceTarget,
    rng: &RandomStream,
) -> Result<Balanced> {
    let counts = data.class_counts();
    if stats.len() != data.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "{} calibrated classes for a {}-class dataset",
            stats.len(),
            data.num_classes()
        )));
    }
    let largest = counts.iter().copied().max().unwrap_or(0);
    let target = match target {
        BalanceTarget::Max => largest,
        BalanceTarget::Count(t) => {
            if t < largest {
                return Err(Error::invalid(format!(
                    "balance target {t} below existing class size {largest}"
                )));
            }
            t
        }
    };

    let draws: Vec<Result<Vec<Vec<f64>>>> = {
        use rayon::prelude::*;
        stats
            .par_iter()
            .enumerate()
            .map(|(k, s)| {
                let deficit = target - counts[k];
                if deficit == 0 {
                    return Ok(Vec::new());
                }
                if counts[k] == 0 && s.base.count == 0 {
                    return Err(Error::invalid(format!(
                        "class {k} has no members and no statistics to sample from"
                    )));
                }
                let mut stream = rng.child_indexed("class", k);
                sample_mvn(&s.calibrated_mean, &s.calibrated_cov, deficit, &mut stream)
            })
            .collect()
    };

    let (mut vectors, mut labels) = data.clone().into_parts();
    let mut mask = vec![false; vectors.len()];
    for (k, d) in draws.into_iter().enumerate() {
        let d = d?;
        mask.extend(std::iter::repeat_n(true, d.len()));
        labels.extend(std::iter::repeat_n(k, d.len()));
        vectors.extend(d);
    }
    Ok(Balanced {
        data: LabeledEmbeddings::new(data.dim(), data.num_classes(), vectors, labels)?,
        synthetic_mask: mask,
    })
}

//! Domain types shared by every stage.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Embedding vectors with (possibly noisy) integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddings {
    dim: usize,
    num_classes: usize,
    vectors: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl LabeledEmbeddings {
    pub fn new(
        dim: usize,
        num_classes: usize,
        vectors: Vec<Vec<f64>>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if num_classes == 0 {
            return Err(Error::invalid("number of classes must be positive"));
        }
        if vectors.is_empty() {
            return Err(Error::invalid("dataset must contain at least one vector"));
        }
        if vectors.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} vectors but {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "vector {i} has length {} (expected {dim})",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("vector {i}")));
            }
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {l} of item {i} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            dim,
            num_classes,
            vectors,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false: a dataset holds at least one item.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_parts(self) -> (Vec<Vec<f64>>, Vec<usize>) {
        (self.vectors, self.labels)
    }

    /// Per-class item counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Item indices grouped by label, ascending within each class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }

    /// Same vectors under a different labelling.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.dim, self.num_classes, self.vectors.clone(), labels)
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.dim,
            self.num_classes,
            indices.iter().map(|&i| self.vectors[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Per-class Gaussian estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class_id: usize,
    pub count: usize,
    pub mean: Vec<f64>,
    #[serde(with = "linalg::rows")]
    pub covariance: DMatrix<f64>,
    /// Set when the covariance could not be estimated (fewer than two members).
    #[serde(default)]
    pub degenerate: bool,
}

impl ClassStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Long-tail and label-noise corruption parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub imbalance_ratio: f64,
    pub noise_rate: f64,
    pub num_classes: usize,
    pub base_count: usize,
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if !(self.imbalance_ratio > 1.0) || !self.imbalance_ratio.is_finite() {
            return Err(Error::invalid(format!(
                "imbalance ratio must be finite and > 1, got {}",
                self.imbalance_ratio
            )));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::invalid(format!(
                "noise rate must lie in [0, 1), got {}",
                self.noise_rate
            )));
        }
        if self.base_count < self.num_classes {
            return Err(Error::invalid(format!(
                "base count {} smaller than the number of classes {}",
                self.base_count, self.num_classes
            )));
        }
        Ok(())
    }

    /// Per-class geometric decay factor `ρ^(-1/(K-1))`.
    pub fn decay(&self) -> f64 {
        self.imbalance_ratio
            .powf(-1.0 / (self.num_classes as f64 - 1.0))
    }
}

/// Shape of the covariance disturbance added to calibrated tail classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Disturbance {
    /// `α` times the all-ones matrix.
    #[default]
    Ones,
    /// `α` times the identity.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Number of head classes lent to each tail class.
    pub q: usize,
    /// Confidence placed on the borrowed head statistics.
    pub gamma: f64,
    /// Covariance disturbance strength.
    pub alpha: f64,
    pub lof_neighbors: usize,
    pub lof_threshold: f64,
    /// Fraction of training items the head classes must cover.
    pub head_mass: f64,
    pub disturbance: Disturbance,
    /// Weight donors by `n_c / d_c` instead of `n_c * d_c`.
    pub invert_weights: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            q: 3,
            gamma: 0.5,
            alpha: 0.01,
            lof_neighbors: 20,
            lof_threshold: 1.5,
            head_mass: 0.5,
            disturbance: Disturbance::Ones,
            invert_weights: false,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::invalid("q must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if self.lof_neighbors == 0 {
            return Err(Error::invalid("lof_neighbors must be positive"));
        }
        if !(self.lof_threshold > 0.0) {
            return Err(Error::invalid(format!(
                "lof_threshold must be > 0, got {}",
                self.lof_threshold
            )));
        }
        if !(self.head_mass > 0.0 && self.head_mass <= 1.0) {
            return Err(Error::invalid(format!(
                "head_mass must lie in (0, 1], got {}",
                self.head_mass
            )));
        }
        Ok(())
    }
}

/// Class-conditional Gaussians with a shared covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthModel {
    pub means: Vec<Vec<f64>>,
    #[serde(with = "linalg::rows")]
    pub shared_covariance: DMatrix<f64>,
    pub counts: Vec<usize>,
}

impl GroundTruthModel {
    /// Model with covariance `sigma^2 * I`.
    pub fn isotropic(means: Vec<Vec<f64>>, sigma: f64, counts: Vec<usize>) -> Result<Self> {
        let dim = means.first().map_or(0, Vec::len);
        let model = Self {
            means,
            shared_covariance: DMatrix::identity(dim, dim) * (sigma * sigma),
            counts,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.shared_covariance.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if dim == 0 || self.means.is_empty() {
            return Err(Error::invalid(
                "model needs at least one class and dimension",
            ));
        }
        if self.counts.len() != self.means.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} means but {} counts",
                self.means.len(),
                self.counts.len()
            )));
        }
        if let Some(k) = self.means.iter().position(|m| m.len() != dim) {
            return Err(Error::ShapeMismatch(format!("mean {k} has wrong length")));
        }
        if self.counts.contains(&0) {
            return Err(Error::invalid("class counts must be positive"));
        }
        linalg::psd_eigen(&self.shared_covariance)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_datasets() {
        assert!(LabeledEmbeddings::new(2, 2, vec![], vec![]).is_err());
        assert!(LabeledEmbeddings::new(2, 2, vec![vec![1.0]], vec![0]).is_err());
        assert!(LabeledEmbeddings::new(2, 2, vec![vec![1.0, 0.0]], vec![2]).is_err());
        assert!(LabeledEmbeddings::new(2, 2, vec![vec![f64::NAN, 0.0]], vec![0]).is_err());
        let ok =
            LabeledEmbeddings::new(2, 3, vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![2, 0]).unwrap();
        assert_eq!(ok.class_counts(), vec![1, 0, 1]);
        assert_eq!(ok.class_indices(), vec![vec![1], vec![], vec![0]]);
    }

    #[test]
    fn corruption_decay() {
        let spec = CorruptionSpec {
            imbalance_ratio: 10.0,
            noise_rate: 0.2,
            num_classes: 10,
            base_count: 5000,
        };
        spec.validate().unwrap();
        let v = spec.decay();
        assert!(v > 0.0 && v < 1.0);
        assert!((v.powi(9) - 0.1).abs() < 1e-12);
        assert!(CorruptionSpec {
            imbalance_ratio: 1.0,
            ..spec
        }
        .validate()
        .is_err());
        assert!(CorruptionSpec {
            noise_rate: 1.0,
            ..spec
        }
        .validate()
        .is_err());
    }

    #[test]
    fn calibration_config_json_uses_field_names() {
        let cfg: CalibrationConfig =
            serde_json::from_str(r#"{"q": 2, "gamma": 0.25, "disturbance": "identity"}"#).unwrap();
        assert_eq!(cfg.q, 2);
        assert_eq!(cfg.gamma, 0.25);
        assert_eq!(cfg.alpha, 0.01);
        assert_eq!(cfg.disturbance, Disturbance::Identity);
        assert!(serde_json::from_str::<CalibrationConfig>(r#"{"qq": 1}"#).is_err());
    }
}

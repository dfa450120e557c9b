//! JSON configuration of a full pipeline run. Sections mirror the stages;
//! omitted fields take their defaults.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::CalibrationConfig;
use crate::error::{Error, Result};
use crate::metrics::SplitRule;
use crate::sample::BalanceTarget;
use crate::train::TrainConfig;

/// Where training and test embeddings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Embedding files in the text format of [`crate::io`]. Test labels are
    /// taken as clean.
    Files { train: PathBuf, test: PathBuf },
    /// Isotropic Gaussian classes around random means.
    Synthetic(SyntheticConfig),
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic(SyntheticConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub num_classes: usize,
    /// Training points per class before long-tail subsampling.
    pub per_class: usize,
    pub test_per_class: usize,
    /// Standard deviation of the random class-mean coordinates.
    pub mean_scale: f64,
    pub sigma: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            num_classes: 10,
            per_class: 1000,
            test_per_class: 200,
            mean_scale: 1.0,
            sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// `1` keeps class sizes unchanged.
    pub imbalance_ratio: f64,
    pub noise_rate: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            imbalance_ratio: 10.0,
            noise_rate: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub target: BalanceTarget,
}

/// A pipeline component that can be switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Freeze the adapter at the identity: the probe trains on the ingested
    /// representations directly.
    ClAnchor,
    /// Skip LOF filtering, calibration and rebalancing.
    Dc,
    Mixup,
    /// Drop the anchor penalty (`β = 0`).
    Reg,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::ClAnchor,
        Ablation::Dc,
        Ablation::Mixup,
        Ablation::Reg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::ClAnchor => "cl-anchor",
            Ablation::Dc => "dc",
            Ablation::Mixup => "mixup",
            Ablation::Reg => "reg",
        }
    }

    /// Parses a comma-separated list; `all` expands to every component and
    /// `none` (or an empty string) to nothing.
    pub fn parse_list(s: &str) -> Result<Vec<Ablation>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "all" => out.extend(Ablation::ALL),
                "none" => {}
                p => out.push(p.parse()?),
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown ablation `{s}` (expected cl-anchor, dc, mixup, reg or all)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub simulate: SimulateConfig,
    pub calibrate: CalibrationConfig,
    pub sample: SampleConfig,
    pub train: TrainConfig,
    pub metrics: SplitRule,
    pub ablate: Vec<Ablation>,
    /// Also write per-point LOF scores.
    pub dump_lof: bool,
}

impl PipelineConfig {
    pub fn ablates(&self, a: Ablation) -> bool {
        self.ablate.contains(&a)
    }

    /// Training settings after ablations are applied.
    pub fn effective_train(&self) -> TrainConfig {
        let mut t = self.train.clone();
        if self.ablates(Ablation::ClAnchor) {
            t.train_adapter = false;
        }
        if self.ablates(Ablation::Mixup) {
            t.mixup = false;
        }
        if self.ablates(Ablation::Reg) {
            t.beta = 0.0;
        }
        t
    }
}

//! Recovery of clean per-class Gaussian representation statistics from
//! noisily labelled, class-imbalanced embedding datasets.
//!
//! The pipeline is: LOF filtering per class ([`lof`]), robust Gaussian
//! estimation and head-to-tail calibration ([`calibrate`]), rebalancing by
//! sampling ([`sample`]), and training of an anchored linear probe
//! ([`train`]). [`simulate`] produces long-tailed noisy data for experiments,
//! [`theory`] checks the estimation-error behaviour by Monte Carlo and
//! [`metrics`] scores a probe on clean held-out data. [`pipeline`] wires the
//! stages together.

// Negated float comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod config;
pub mod data;
pub mod error;
pub mod io;
pub mod linalg;
pub mod lof;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod sample;
pub mod simulate;
pub mod theory;
pub mod train;

pub use data::{
    CalibrationConfig, ClassStats, CorruptionSpec, Disturbance, GroundTruthModel, LabeledEmbeddings,
};
pub use error::{Error, Result};
pub use rng::{seeded_rng, RandomStream};

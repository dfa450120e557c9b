//! End-to-end run: simulate → LOF filter → robust statistics → calibrate →
//! balance → train → evaluate, with every intermediate artifact on disk.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrate::{self, CalibratedStats, CalibrationReport};
use crate::config::{Ablation, DataConfig, PipelineConfig};
use crate::data::{CalibrationConfig, CorruptionSpec, GroundTruthModel, LabeledEmbeddings};
use crate::error::{Error, Result};
use crate::io;
use crate::lof::{self, ClassFilter};
use crate::metrics::{self, Metrics};
use crate::rng::{seeded_rng, RandomStream};
use crate::sample;
use crate::simulate::{self, CorruptionReport};
use crate::train;

/// LOF filtering, robust statistics and tail calibration of one dataset.
///
/// If `cfg.q` exceeds the number of head classes it is lowered to that
/// number, with a warning.
pub fn calibrate_dataset(
    data: &LabeledEmbeddings,
    cfg: &CalibrationConfig,
) -> Result<(Vec<ClassFilter>, CalibrationReport)> {
    cfg.validate()?;
    let filters = lof::filter_classes(data, cfg);
    let preserved: Vec<Vec<usize>> = filters.iter().map(|f| f.preserved.clone()).collect();
    let stats = calibrate::robust_class_stats(data, &preserved)?;
    let counts = data.class_counts();
    let partition = calibrate::split_head_tail(&counts, cfg.head_mass);
    let mut cfg = cfg.clone();
    if !partition.tail.is_empty() && cfg.q > partition.head.len() {
        log::warn!(
            "q={} exceeds the {} head classes; using q={}",
            cfg.q,
            partition.head.len(),
            partition.head.len()
        );
        cfg.q = partition.head.len();
    }
    let classes = calibrate::calibrate_tail(&stats, &counts, &partition, &cfg)?;
    let report = CalibrationReport {
        dim: data.dim(),
        num_classes: data.num_classes(),
        config: cfg,
        partition,
        classes,
    };
    Ok((filters, report))
}

/// Training and clean test data before corruption.
struct Source {
    train: LabeledEmbeddings,
    test: LabeledEmbeddings,
}

fn load_source(cfg: &PipelineConfig, root: &RandomStream) -> Result<Source> {
    match &cfg.data {
        DataConfig::Files { train, test } => Ok(Source {
            train: io::load_embeddings(train)?,
            test: io::load_embeddings(test)?,
        }),
        DataConfig::Synthetic(s) => {
            let mut means_rng = root.child("means");
            let means = simulate::random_means(s.num_classes, s.dim, s.mean_scale, &mut means_rng);
            let model = |per_class| {
                GroundTruthModel::isotropic(means.clone(), s.sigma, vec![per_class; s.num_classes])
            };
            Ok(Source {
                train: simulate::synth_gaussian(&model(s.per_class)?, &root.child("train-pool"))?,
                test: simulate::synth_gaussian(&model(s.test_per_class)?, &root.child("test"))?,
            })
        }
    }
}

fn corruption(cfg: &PipelineConfig, pool: &LabeledEmbeddings) -> Option<CorruptionSpec> {
    (cfg.simulate.imbalance_ratio != 1.0).then(|| CorruptionSpec {
        imbalance_ratio: cfg.simulate.imbalance_ratio,
        noise_rate: cfg.simulate.noise_rate,
        num_classes: pool.num_classes(),
        base_count: pool.class_counts().into_iter().min().unwrap_or(0),
    })
}

/// Result of [`run_pipeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub metrics: Metrics,
    pub corruption: CorruptionReport,
    pub ablate: Vec<Ablation>,
    pub out_dir: PathBuf,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs the whole pipeline and writes into `out_dir`:
///
/// * `config.json` (resolved configuration)
/// * `train_noisy.txt`, `test.txt`, `corruption.json`
/// * `calibration.json`, `lof.csv` (when `dump_lof`)
/// * `balanced.txt`, `synthetic_mask.csv`
/// * `model.json`, `metrics.json`
///
/// Errors are tagged with the stage that raised them; files written by
/// earlier stages are left in place. With the `dc` ablation the calibration
/// and balancing artifacts are not produced.
///
/// Streams below the root `seeded_rng(seed, "pipeline")`: `means`,
/// `train-pool` and `test` (synthetic data), `corrupt`, `sample`, `train`.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    io::write_json(cfg, out_dir.join("config.json")).map_err(|e| e.in_stage("config"))?;
    let root = seeded_rng(cfg.seed, "pipeline");

    let source = load_source(cfg, &root).map_err(|e| e.in_stage("load"))?;
    let corrupted = (|| {
        let spec = corruption(cfg, &source.train);
        let c = simulate::corrupt(
            &source.train,
            spec.as_ref(),
            cfg.simulate.noise_rate,
            &root.child("corrupt"),
        )?;
        io::save_embeddings(&c.data, out_dir.join("train_noisy.txt"))?;
        io::save_embeddings(&source.test, out_dir.join("test.txt"))?;
        io::write_json(&c.report, out_dir.join("corruption.json"))?;
        log::info!(
            "corrupted training set: {} items, counts {:?}, flip rate {:.3}",
            c.data.len(),
            c.report.noisy_counts,
            c.report.empirical_noise_rate
        );
        Ok(c)
    })()
    .map_err(|e: Error| e.in_stage("simulate"))?;
    let noisy = &corrupted.data;

    let (train_data, synthetic) = if cfg.ablates(Ablation::Dc) {
        (noisy.clone(), vec![false; noisy.len()])
    } else {
        let report = (|| {
            let (filters, report) = calibrate_dataset(noisy, &cfg.calibrate)?;
            let removed: usize = filters
                .iter()
                .map(|f| f.members.len() - f.preserved.len())
                .sum();
            log::info!("LOF removed {removed} of {} items", noisy.len());
            if cfg.dump_lof {
                write_text(
                    &out_dir.join("lof.csv"),
                    &lof::format_lof_dump(&filters, noisy),
                )?;
            }
            io::write_json(&report, out_dir.join("calibration.json"))?;
            Ok(report)
        })()
        .map_err(|e: Error| e.in_stage("calibrate"))?;
        let balanced = (|| {
            let b = sample::balance_dataset(
                noisy,
                &report.classes,
                cfg.sample.target,
                &root.child("sample"),
            )?;
            io::save_embeddings(&b.data, out_dir.join("balanced.txt"))?;
            write_text(
                &out_dir.join("synthetic_mask.csv"),
                &format_mask(&b.synthetic_mask),
            )?;
            Ok(b)
        })()
        .map_err(|e: Error| e.in_stage("sample"))?;
        (balanced.data, balanced.synthetic_mask)
    };

    let train_cfg = cfg.effective_train();
    let outcome = train::train_probe(&train_data, &synthetic, &train_cfg, &root.child("train"))
        .map_err(|e| e.in_stage("train"))?;
    let mut model = outcome.model;
    // Splits follow the noisy training histogram, before rebalancing.
    model.class_counts = noisy.class_counts();
    io::write_json(&model, out_dir.join("model.json")).map_err(|e| e.in_stage("train"))?;

    let metrics = (|| {
        let m = metrics::evaluate(&model, &source.test, &cfg.metrics)?;
        io::write_json(&m, out_dir.join("metrics.json"))?;
        Ok(m)
    })()
    .map_err(|e: Error| e.in_stage("evaluate"))?;
    log::info!("test accuracy {:.4}", metrics.overall);
    Ok(RunOutcome {
        metrics,
        corruption: corrupted.report,
        ablate: cfg.ablate.clone(),
        out_dir: out_dir.to_path_buf(),
    })
}

/// One `0`/`1` line per item, `1` marking synthetic points.
pub fn format_mask(mask: &[bool]) -> String {
    let mut s = String::with_capacity(2 * mask.len() + 10);
    s.push_str("synthetic\n");
    for &m in mask {
        s.push_str(if m { "1\n" } else { "0\n" });
    }
    s
}

/// Inverse of [`format_mask`].
pub fn parse_mask(text: &str, source: &str) -> Result<Vec<bool>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "synthetic")) => {}
        _ => {
            return Err(Error::Parse {
                path: source.into(),
                line: 1,
                message: "expected header `synthetic`".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::Parse {
                path: source.into(),
                line: i + 1,
                message: format!("expected 0 or 1, got `{other}`"),
            }),
        })
        .collect()
}

/// Calibrated statistics with tail flags, as stored in `calibration.json`.
pub fn load_calibration(path: impl AsRef<Path>) -> Result<Vec<CalibratedStats>> {
    let report: CalibrationReport = io::read_json(path)?;
    Ok(report.classes)
}

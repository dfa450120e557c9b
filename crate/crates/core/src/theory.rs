//! Monte-Carlo checks of the estimation-error behaviour of vanilla and
//! calibrated class means under class-size-proportional label noise.
//!
//! Labels are flipped with the population law `P(ỹ=j | y=k) = η n_j / n`
//! ([`FlipLaw::Population`]), never the dataset-corruption law.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{self, split_head_tail, ClassPartition};
use crate::data::{ClassStats, GroundTruthModel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{seeded_rng, RandomStream};
use crate::simulate::{synth_gaussian, FlipLaw, TransitionMatrix};

/// Which calibrated estimator the harness evaluates for tail classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    /// Equal-weight blend with coefficient `tau` per donor.
    Uniform,
    /// Distance/size weighted blend with confidence `gamma`.
    Weighted { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryExperiment {
    pub model: GroundTruthModel,
    pub eta: f64,
    pub q: usize,
    pub tau_calib: f64,
    pub trials: usize,
    pub estimator: Estimator,
    pub heads: HeadRule,
}

/// How head classes are chosen in a theory experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum HeadRule {
    /// Most frequent classes covering at least this share of the data.
    Mass { share: f64 },
    /// Every class with at least this many members.
    MinCount { count: usize },
}

impl Default for HeadRule {
    fn default() -> Self {
        HeadRule::Mass { share: 0.5 }
    }
}

impl TheoryExperiment {
    pub fn partition(&self) -> ClassPartition {
        let counts = &self.model.counts;
        match self.heads {
            HeadRule::Mass { share } => split_head_tail(counts, share),
            HeadRule::MinCount { count } => {
                let (head, tail) = (0..counts.len()).partition(|&k| counts[k] >= count);
                ClassPartition {
                    head,
                    tail,
                    counts: counts.clone(),
                }
            }
        }
    }

    /// Donor heads of every tail class, chosen by true-mean distance.
    pub fn donors(&self) -> Result<Vec<Vec<usize>>> {
        let partition = self.partition();
        let truth = true_stats(&self.model);
        (0..self.model.num_classes())
            .map(|k| {
                if partition.is_head(k) {
                    Ok(Vec::new())
                } else {
                    calibrate::topq_heads(&truth, &partition, k, self.q)
                }
            })
            .collect()
    }

    /// Largest distance from a tail mean to one of its donor means.
    pub fn delta_q(&self) -> Result<f64> {
        let donors = self.donors()?;
        let mut worst = 0.0f64;
        for (k, ds) in donors.iter().enumerate() {
            for &j in ds {
                worst = worst.max(linalg::dist(&self.model.means[j], &self.model.means[k]));
            }
        }
        Ok(worst)
    }
}

fn true_stats(model: &GroundTruthModel) -> Vec<ClassStats> {
    model
        .means
        .iter()
        .enumerate()
        .map(|(k, m)| ClassStats {
            class_id: k,
            count: model.counts[k],
            mean: m.clone(),
            covariance: model.shared_covariance.clone(),
            degenerate: false,
        })
        .collect()
}

/// `E[μ̂_k] = (1 − η + η n_k/n) μ_k + Σ_{j≠k} (η n_j / n) μ_j`.
pub fn expected_noisy_mean(model: &GroundTruthModel, eta: f64, k: usize) -> Vec<f64> {
    let n = model.total() as f64;
    let mut out = vec![0.0; model.dim()];
    for (j, mu) in model.means.iter().enumerate() {
        let share = model.counts[j] as f64 / n;
        let w = if j == k {
            1.0 - eta + share * eta
        } else {
            share * eta
        };
        for (o, x) in out.iter_mut().zip(mu) {
            *o += w * x;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassError {
    pub class_id: usize,
    pub is_tail: bool,
    pub vanilla_mse: f64,
    pub vanilla_se: f64,
    pub calibrated_mse: Option<f64>,
    pub calibrated_se: Option<f64>,
    /// Fraction of trials where the calibrated error beat the vanilla one.
    pub calibrated_win_rate: Option<f64>,
    /// Monte-Carlo average of the noisy-label mean and its standard error.
    pub mean_estimate: Vec<f64>,
    pub mean_estimate_se: Vec<f64>,
    pub expected_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanErrorReport {
    pub trials: usize,
    pub delta_q: f64,
    pub classes: Vec<ClassError>,
}

impl MeanErrorReport {
    /// Average vanilla MSE over tail classes.
    pub fn tail_vanilla_mse(&self) -> f64 {
        let tails: Vec<f64> = self
            .classes
            .iter()
            .filter(|c| c.is_tail)
            .map(|c| c.vanilla_mse)
            .collect();
        tails.iter().sum::<f64>() / tails.len().max(1) as f64
    }
}

struct Trial {
    noisy_means: Vec<Vec<f64>>,
    vanilla: Vec<f64>,
    calibrated: Vec<Option<f64>>,
}

fn run_trial(
    exp: &TheoryExperiment,
    transition: &TransitionMatrix,
    donors: &[Vec<usize>],
    stream: &RandomStream,
) -> Result<Trial> {
    let model = &exp.model;
    let data = synth_gaussian(model, &stream.child("synth"))?;
    let mut flip = stream.child("flip");
    let noisy: Vec<usize> = data
        .labels()
        .iter()
        .map(|&y| transition.flip(y, &mut flip))
        .collect();
    let data = data.with_labels(noisy)?;
    let groups = data.class_indices();
    if let Some(k) = groups.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!(
            "class {k} received no noisy labels in a trial"
        )));
    }
    let noisy_means: Vec<Vec<f64>> = groups
        .iter()
        .map(|idx| {
            linalg::mean(
                model.dim(),
                idx.iter().map(|&i| data.vectors()[i].as_slice()),
            )
        })
        .collect();
    let vanilla = noisy_means
        .iter()
        .zip(&model.means)
        .map(|(est, mu)| linalg::sq_dist(est, mu))
        .collect();

    let noisy_counts: Vec<usize> = groups.iter().map(Vec::len).collect();
    let calibrated = (0..model.num_classes())
        .map(|k| {
            if donors[k].is_empty() {
                return Ok(None);
            }
            let est = match exp.estimator {
                Estimator::Uniform => {
                    calibrate::uniform_calibrated_mean(&noisy_means, &donors[k], k, exp.tau_calib)?
                }
                Estimator::Weighted { gamma } => {
                    let stats: Vec<ClassStats> = noisy_means
                        .iter()
                        .enumerate()
                        .map(|(c, m)| ClassStats {
                            class_id: c,
                            count: noisy_counts[c],
                            mean: m.clone(),
                            covariance: DMatrix::zeros(0, 0),
                            degenerate: false,
                        })
                        .collect();
                    let w = calibrate::donor_weights(&stats, &noisy_counts, &donors[k], k, false)?;
                    let mut out: Vec<f64> =
                        noisy_means[k].iter().map(|x| (1.0 - gamma) * x).collect();
                    for (&c, wc) in donors[k].iter().zip(&w.weights) {
                        for (o, x) in out.iter_mut().zip(&noisy_means[c]) {
                            *o += gamma * wc * x;
                        }
                    }
                    out
                }
            };
            Ok(Some(linalg::sq_dist(&est, &model.means[k])))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trial {
        noisy_means,
        vanilla,
        calibrated,
    })
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `exp.trials` independent trials. Trial `t` uses the child stream
/// `trial-t`; results are reduced in trial order.
pub fn mean_error_mc(exp: &TheoryExperiment, rng: &RandomStream) -> Result<MeanErrorReport> {
    if exp.trials < 100 {
        return Err(Error::invalid(format!(
            "need at least 100 trials, got {}",
            exp.trials
        )));
    }
    exp.model.validate()?;
    let transition = TransitionMatrix::new(&exp.model.counts, exp.eta, FlipLaw::Population)?;
    let donors = exp.donors()?;
    let partition = exp.partition();
    let trials: Vec<Trial> = (0..exp.trials)
        .into_par_iter()
        .map(|t| run_trial(exp, &transition, &donors, &rng.child_indexed("trial", t)))
        .collect::<Result<_>>()?;

    let dim = exp.model.dim();
    let classes = (0..exp.model.num_classes())
        .map(|k| {
            let vanilla: Vec<f64> = trials.iter().map(|t| t.vanilla[k]).collect();
            let (vanilla_mse, vanilla_se) = mean_and_se(&vanilla);
            let calibrated: Option<Vec<f64>> = trials.iter().map(|t| t.calibrated[k]).collect();
            let (calibrated_mse, calibrated_se, calibrated_win_rate) = match &calibrated {
                Some(c) => {
                    let (m, se) = mean_and_se(c);
                    let wins = c.iter().zip(&vanilla).filter(|(c, v)| c < v).count();
                    (Some(m), Some(se), Some(wins as f64 / c.len() as f64))
                }
                None => (None, None, None),
            };
            let (mean_estimate, mean_estimate_se) = (0..dim)
                .map(|d| {
                    let xs: Vec<f64> = trials.iter().map(|t| t.noisy_means[k][d]).collect();
                    mean_and_se(&xs)
                })
                .unzip();
            ClassError {
                class_id: k,
                is_tail: !partition.is_head(k),
                vanilla_mse,
                vanilla_se,
                calibrated_mse,
                calibrated_se,
                calibrated_win_rate,
                mean_estimate,
                mean_estimate_se,
                expected_mean: expected_noisy_mean(&exp.model, exp.eta, k),
            }
        })
        .collect();
    Ok(MeanErrorReport {
        trials: exp.trials,
        delta_q: exp.delta_q()?,
        classes,
    })
}

/// `k`-th class mean `spacing * e_(k mod m)`, negated on every second wrap.
fn axis_means(num_classes: usize, dim: usize, spacing: f64) -> Vec<Vec<f64>> {
    (0..num_classes)
        .map(|k| {
            let mut v = vec![0.0; dim];
            let sign = if (k / dim).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            v[k % dim] = sign * spacing;
            v
        })
        .collect()
}

/// Grid for [`bound_scaling_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingGrid {
    pub etas: Vec<f64>,
    pub n_tails: Vec<usize>,
    pub dims: Vec<usize>,
    pub n_head: usize,
    pub num_heads: usize,
    pub num_tails: usize,
    /// Distance of each class mean from the origin along its own axis.
    pub spacing: f64,
    pub sigma: f64,
    pub trials: usize,
    /// Also run the noiseless row at twice each dimension.
    pub check_dim_doubling: bool,
}

impl Default for ScalingGrid {
    fn default() -> Self {
        Self {
            etas: vec![0.0, 0.1, 0.2, 0.3],
            n_tails: vec![50, 100, 200, 400],
            dims: vec![8],
            n_head: 2000,
            num_heads: 2,
            num_tails: 2,
            spacing: 1.0,
            sigma: 1.0,
            trials: 400,
            check_dim_doubling: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCell {
    pub eta: f64,
    pub n_tail: usize,
    pub dim: usize,
    pub vanilla_mse: f64,
    pub vanilla_se: f64,
}

/// Least-squares fit `mse ≈ a + b η² + c m / n_tail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub intercept: f64,
    pub eta_sq_coef: f64,
    pub dim_over_n_coef: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    /// Cells of the fitted grid.
    pub cells: Vec<ScalingCell>,
    /// Noiseless cells at twice each grid dimension.
    pub doubling_cells: Vec<ScalingCell>,
    pub fit: ScalingFit,
    pub checks: Vec<Check>,
}

impl ScalingGrid {
    pub fn model(&self, dim: usize, n_tail: usize) -> Result<GroundTruthModel> {
        let k = self.num_heads + self.num_tails;
        let counts = std::iter::repeat_n(self.n_head, self.num_heads)
            .chain(std::iter::repeat_n(n_tail, self.num_tails))
            .collect();
        GroundTruthModel::isotropic(axis_means(k, dim, self.spacing), self.sigma, counts)
    }
}

fn tail_cell(
    grid: &ScalingGrid,
    dim: usize,
    eta: f64,
    n_tail: usize,
    rng: &RandomStream,
) -> Result<ScalingCell> {
    let exp = TheoryExperiment {
        model: grid.model(dim, n_tail)?,
        eta,
        q: 1,
        tau_calib: 0.0,
        trials: grid.trials,
        estimator: Estimator::Uniform,
        heads: HeadRule::MinCount { count: grid.n_head },
    };
    let report = mean_error_mc(&exp, &rng.child(&format!("m{dim}-eta{eta}-n{n_tail}")))?;
    let tails: Vec<&ClassError> = report.classes.iter().filter(|c| c.is_tail).collect();
    let se = tails
        .iter()
        .map(|c| c.vanilla_se * c.vanilla_se)
        .sum::<f64>()
        .sqrt()
        / tails.len() as f64;
    Ok(ScalingCell {
        eta,
        n_tail,
        dim,
        vanilla_mse: report.tail_vanilla_mse(),
        vanilla_se: se,
    })
}

fn fit_scaling(cells: &[ScalingCell]) -> ScalingFit {
    let rows = cells.len();
    let x = DMatrix::from_fn(rows, 3, |i, j| match j {
        0 => 1.0,
        1 => cells[i].eta * cells[i].eta,
        _ => cells[i].dim as f64 / cells[i].n_tail as f64,
    });
    let y = DVector::from_iterator(rows, cells.iter().map(|c| c.vanilla_mse));
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let coef = xtx
        .lu()
        .solve(&xty)
        .unwrap_or_else(|| DVector::from_element(3, f64::NAN));
    let pred = &x * &coef;
    let mean_y = y.mean();
    let ss_res: f64 = (&y - pred).iter().map(|r| r * r).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum();
    ScalingFit {
        intercept: coef[0],
        eta_sq_coef: coef[1],
        dim_over_n_coef: coef[2],
        r_squared: 1.0 - ss_res / ss_tot,
    }
}

/// Vanilla tail-class MSE over an `η × n_tail × m` grid, a fit of the
/// `η² + m/n_tail` form, and proportionality checks on the noiseless row.
pub fn bound_scaling_check(grid: &ScalingGrid, rng: &RandomStream) -> Result<ScalingReport> {
    if grid.etas.len() < 4 || grid.n_tails.len() < 4 {
        return Err(Error::invalid(
            "scaling grid needs at least 4 points per axis",
        ));
    }
    let mut cells = Vec::new();
    for &dim in &grid.dims {
        for &eta in &grid.etas {
            for &n_tail in &grid.n_tails {
                cells.push(tail_cell(grid, dim, eta, n_tail, rng)?);
            }
        }
    }
    let fit = fit_scaling(&cells);
    let mut checks = vec![
        Check {
            name: "fit_r_squared".into(),
            passed: fit.r_squared >= 0.95,
            detail: format!("R² = {:.4} (need >= 0.95)", fit.r_squared),
        },
        Check {
            name: "fit_coefficient_signs".into(),
            passed: fit.eta_sq_coef > 0.0 && fit.dim_over_n_coef > 0.0,
            detail: format!(
                "b(η²) = {:.4}, c(m/n) = {:.4}",
                fit.eta_sq_coef, fit.dim_over_n_coef
            ),
        },
    ];

    let mut doubling_cells = Vec::new();
    let noiseless = |dim: usize, n: usize| {
        cells
            .iter()
            .find(|c| c.eta == 0.0 && c.dim == dim && c.n_tail == n)
            .map(|c| c.vanilla_mse)
    };
    if grid.etas.contains(&0.0) {
        for &dim in &grid.dims {
            let base_n = grid.n_tails[0];
            let Some(base) = noiseless(dim, base_n) else {
                continue;
            };
            let worst = grid
                .n_tails
                .iter()
                .filter_map(|&n| noiseless(dim, n).map(|v| (v * n as f64) / (base * base_n as f64)))
                .fold(0.0f64, |w, r| w.max((r - 1.0).abs()));
            checks.push(Check {
                name: format!("noiseless_inverse_n_m{dim}"),
                passed: worst <= 0.10,
                detail: format!("max |mse·n / (mse₀·n₀) − 1| = {worst:.4} (need <= 0.10)"),
            });
        }
        if grid.check_dim_doubling {
            for &dim in &grid.dims {
                let mut worst = 0.0f64;
                for &n in &grid.n_tails {
                    let doubled = tail_cell(grid, 2 * dim, 0.0, n, rng)?;
                    let base = noiseless(dim, n).expect("noiseless row present");
                    worst = worst.max((doubled.vanilla_mse / base / 2.0 - 1.0).abs());
                    doubling_cells.push(doubled);
                }
                checks.push(Check {
                    name: format!("noiseless_dim_doubling_m{dim}"),
                    passed: worst <= 0.10,
                    detail: format!("max |mse(2m)/mse(m)/2 − 1| = {worst:.4} (need <= 0.10)"),
                });
            }
        }
    }
    Ok(ScalingReport {
        cells,
        doubling_cells,
        fit,
        checks,
    })
}

/// Setting where calibration should help: small tails, large heads and
/// donors sharing the tail mean. Tail `t` and its `q` donors sit together at
/// `± separation/2` along the first axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeConfig {
    pub dim: usize,
    pub q: usize,
    pub n_tail: usize,
    pub n_head: usize,
    pub eta: f64,
    pub tau: f64,
    pub separation: f64,
    pub sigma: f64,
    pub trials: usize,
    /// Required fraction of trials where calibration wins.
    pub min_win_rate: f64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self {
            dim: 8,
            q: 4,
            n_tail: 20,
            n_head: 2000,
            eta: 0.2,
            tau: 1.0,
            separation: 2.0,
            sigma: 1.0,
            trials: 500,
            min_win_rate: 0.95,
        }
    }
}

impl RegimeConfig {
    /// Two clusters, each one tail class plus `q` heads at the same mean.
    pub fn experiment(&self) -> Result<TheoryExperiment> {
        let mut means = Vec::new();
        let mut counts = Vec::new();
        for side in [1.0, -1.0] {
            let mut mu = vec![0.0; self.dim];
            mu[0] = side * self.separation / 2.0;
            for _ in 0..self.q {
                means.push(mu.clone());
                counts.push(self.n_head);
            }
            means.push(mu);
            counts.push(self.n_tail);
        }
        Ok(TheoryExperiment {
            model: GroundTruthModel::isotropic(means, self.sigma, counts)?,
            eta: self.eta,
            q: self.q,
            tau_calib: self.tau,
            trials: self.trials,
            estimator: Estimator::Uniform,
            heads: HeadRule::MinCount { count: self.n_head },
        })
    }
}

/// Closed-form-vs-simulation check of the noisy-label mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasCheckConfig {
    pub model: GroundTruthModel,
    pub etas: Vec<f64>,
    pub trials: usize,
    /// Allowed deviation in standard errors.
    pub max_se: f64,
}

impl Default for BiasCheckConfig {
    fn default() -> Self {
        Self {
            model: GroundTruthModel {
                means: vec![
                    vec![2.0, 0.0, 0.0],
                    vec![0.0, 2.0, 0.0],
                    vec![-1.0, -1.0, 1.5],
                ],
                shared_covariance: DMatrix::identity(3, 3),
                counts: vec![5000, 2500, 1000],
            },
            etas: vec![0.1, 0.3],
            trials: 2000,
            max_se: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub seed: u64,
    pub bias: BiasCheckConfig,
    pub scaling: ScalingGrid,
    pub regime: RegimeConfig,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            bias: BiasCheckConfig::default(),
            scaling: ScalingGrid::default(),
            regime: RegimeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub bias: Vec<MeanErrorReport>,
    pub scaling: ScalingReport,
    pub regime: MeanErrorReport,
    pub checks: Vec<Check>,
    pub passed: bool,
}

pub fn bias_checks(
    cfg: &BiasCheckConfig,
    rng: &RandomStream,
) -> Result<(Vec<MeanErrorReport>, Vec<Check>)> {
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    for &eta in &cfg.etas {
        let exp = TheoryExperiment {
            model: cfg.model.clone(),
            eta,
            q: 1,
            tau_calib: 0.0,
            trials: cfg.trials,
            estimator: Estimator::Uniform,
            heads: HeadRule::default(),
        };
        let report = mean_error_mc(&exp, &rng.child(&format!("eta{eta}")))?;
        let mut worst = 0.0f64;
        for c in &report.classes {
            for d in 0..c.expected_mean.len() {
                let z = (c.mean_estimate[d] - c.expected_mean[d]).abs() / c.mean_estimate_se[d];
                worst = worst.max(z);
            }
        }
        checks.push(Check {
            name: format!("closed_form_mean_eta{eta}"),
            passed: worst <= cfg.max_se,
            detail: format!(
                "max |MC − closed form| = {worst:.3} SE (need <= {})",
                cfg.max_se
            ),
        });
        reports.push(report);
    }
    Ok((reports, checks))
}

pub fn regime_check(
    cfg: &RegimeConfig,
    rng: &RandomStream,
) -> Result<(MeanErrorReport, Vec<Check>)> {
    let exp = cfg.experiment()?;
    let report = mean_error_mc(&exp, rng)?;
    let checks = report
        .classes
        .iter()
        .filter(|c| c.is_tail)
        .map(|c| {
            let rate = c.calibrated_win_rate.unwrap_or(0.0);
            let mse = c.calibrated_mse.unwrap_or(f64::NAN);
            Check {
                name: format!("calibration_helps_class{}", c.class_id),
                passed: rate >= cfg.min_win_rate && mse < c.vanilla_mse,
                detail: format!(
                    "win rate {rate:.3} (need >= {}), calibrated mse {mse:.5} vs vanilla {:.5}",
                    cfg.min_win_rate, c.vanilla_mse
                ),
            }
        })
        .collect();
    Ok((report, checks))
}

/// Runs every theory check under one seed.
pub fn verify_theory(cfg: &TheoryConfig) -> Result<TheoryReport> {
    let root = seeded_rng(cfg.seed, "theory");
    let (bias, mut checks) = bias_checks(&cfg.bias, &root.child("bias"))?;
    let scaling = bound_scaling_check(&cfg.scaling, &root.child("scaling"))?;
    checks.extend(scaling.checks.iter().cloned());
    let (regime, regime_checks) = regime_check(&cfg.regime, &root.child("regime"))?;
    checks.extend(regime_checks);
    let passed = checks.iter().all(|c| c.passed);
    Ok(TheoryReport {
        bias,
        scaling,
        regime,
        checks,
        passed,
    })
}

//! Anchored linear probe: an identity-initialised affine adapter followed by
//! a linear head, trained with (optionally mixup) soft-target cross-entropy
//! plus a penalty keeping adapted representations near the ingested ones.
//!
//! Also home to the Fisher discriminant for known Gaussian models and the
//! InfoNCE contrastive score.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::data::{GroundTruthModel, LabeledEmbeddings};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::RandomStream;

/// `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    #[serde(with = "linalg::rows")]
    pub weights: DMatrix<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn identity(dim: usize) -> Self {
        Self {
            weights: DMatrix::identity(dim, dim),
            bias: vec![0.0; dim],
        }
    }

    pub fn zeros(out: usize, input: usize) -> Self {
        Self {
            weights: DMatrix::zeros(out, input),
            bias: vec![0.0; out],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.clone();
        for (r, yr) in y.iter_mut().enumerate() {
            for (c, xc) in x.iter().enumerate() {
                *yr += self.weights[(r, c)] * xc;
            }
        }
        y
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|x| x.is_finite())
    }

    fn axpy(&mut self, a: f64, other: &Affine) {
        self.weights.zip_apply(&other.weights, |w, o| *w += a * o);
        for (b, o) in self.bias.iter_mut().zip(&other.bias) {
            *b += a * o;
        }
    }

    fn scale(&mut self, a: f64) {
        self.weights *= a;
        self.bias.iter_mut().for_each(|b| *b *= a);
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Affine) -> f64 {
        let w = (&self.weights - &other.weights).amax();
        let b = self
            .bias
            .iter()
            .zip(&other.bias)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        w.max(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub adapter: Affine,
    pub head: Affine,
    pub beta: f64,
    pub mixup_alpha: f64,
    /// Training label histogram, used to split classes for evaluation.
    #[serde(default)]
    pub class_counts: Vec<usize>,
}

impl ProbeModel {
    pub fn new(dim: usize, num_classes: usize, beta: f64, mixup_alpha: f64) -> Self {
        Self {
            adapter: Affine::identity(dim),
            head: Affine::zeros(num_classes, dim),
            beta,
            mixup_alpha,
            class_counts: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.adapter.bias.len()
    }

    pub fn num_classes(&self) -> usize {
        self.head.bias.len()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.head.apply(&self.adapter.apply(x))
    }

    /// Arg-max class, ties to the lower id.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    fn is_finite(&self) -> bool {
        self.adapter.is_finite() && self.head.is_finite()
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn one_hot(class: usize, num_classes: usize) -> Vec<f64> {
    let mut t = vec![0.0; num_classes];
    t[class] = 1.0;
    t
}

/// `(λ x_i + (1-λ) x_j, λ y_i + (1-λ) y_j)`.
pub fn mixup_pair(
    x_i: &[f64],
    y_i: &[f64],
    x_j: &[f64],
    y_j: &[f64],
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!(
            "mixup lambda must lie in [0, 1], got {lambda}"
        )));
    }
    if x_i.len() != x_j.len() || y_i.len() != y_j.len() {
        return Err(Error::ShapeMismatch(
            "mixup operands differ in length".into(),
        ));
    }
    let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect()
    };
    Ok((mix(x_i, x_j), mix(y_i, y_j)))
}

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    /// Soft target on the probability simplex.
    pub target: Vec<f64>,
    /// Ingested representation the adapted input is pulled towards. `None`
    /// marks a sampled representation, which skips the adapter and the
    /// penalty and goes straight to the head.
    pub anchor: Option<Vec<f64>>,
}

impl Example {
    pub fn anchored(input: Vec<f64>, target: Vec<f64>) -> Self {
        Self {
            anchor: Some(input.clone()),
            input,
            target,
        }
    }

    pub fn sampled(input: Vec<f64>, target: Vec<f64>) -> Self {
        Self {
            input,
            target,
            anchor: None,
        }
    }
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub adapter: Affine,
    pub head: Affine,
}

impl Gradients {
    fn zeros(dim: usize, num_classes: usize) -> Self {
        Self {
            adapter: Affine::zeros(dim, dim),
            head: Affine::zeros(num_classes, dim),
        }
    }

    fn axpy(&mut self, a: f64, other: &Gradients) {
        self.adapter.axpy(a, &other.adapter);
        self.head.axpy(a, &other.head);
    }

    fn scale(&mut self, a: f64) {
        self.adapter.scale(a);
        self.head.scale(a);
    }
}

/// Batch means of the two loss terms and their gradients.
#[derive(Debug, Clone)]
pub struct LossParts {
    pub cross_entropy: f64,
    pub anchor_penalty: f64,
    pub grad_cross_entropy: Gradients,
    pub grad_anchor_penalty: Gradients,
}

pub fn loss_parts(model: &ProbeModel, batch: &[Example]) -> Result<LossParts> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let (dim, k) = (model.dim(), model.num_classes());
    let mut ce = 0.0;
    let mut pen = 0.0;
    let mut g_ce = Gradients::zeros(dim, k);
    let mut g_pen = Gradients::zeros(dim, k);

    for ex in batch {
        if ex.input.len() != dim || ex.target.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "example has input {} / target {}, model expects {dim} / {k}",
                ex.input.len(),
                ex.target.len()
            )));
        }
        let z = match &ex.anchor {
            Some(_) => model.adapter.apply(&ex.input),
            None => ex.input.clone(),
        };
        let logits = model.head.apply(&z);
        let lse = log_sum_exp(&logits);
        let target_mass: f64 = ex.target.iter().sum();
        ce -= ex
            .target
            .iter()
            .zip(&logits)
            .map(|(t, s)| if *t == 0.0 { 0.0 } else { t * (s - lse) })
            .sum::<f64>();

        let g_logits: Vec<f64> = logits
            .iter()
            .zip(&ex.target)
            .map(|(s, t)| (s - lse).exp() * target_mass - t)
            .collect();
        let mut g_z = vec![0.0; dim];
        for (r, &gr) in g_logits.iter().enumerate() {
            g_ce.head.bias[r] += gr;
            for c in 0..dim {
                g_ce.head.weights[(r, c)] += gr * z[c];
                g_z[c] += model.head.weights[(r, c)] * gr;
            }
        }
        if let Some(anchor) = &ex.anchor {
            let residual: Vec<f64> = z.iter().zip(anchor).map(|(z, a)| z - a).collect();
            pen += linalg::norm_sq(&residual);
            for r in 0..dim {
                g_ce.adapter.bias[r] += g_z[r];
                g_pen.adapter.bias[r] += 2.0 * residual[r];
                for c in 0..dim {
                    g_ce.adapter.weights[(r, c)] += g_z[r] * ex.input[c];
                    g_pen.adapter.weights[(r, c)] += 2.0 * residual[r] * ex.input[c];
                }
            }
        }
    }
    let inv = 1.0 / batch.len() as f64;
    g_ce.scale(inv);
    g_pen.scale(inv);
    let parts = LossParts {
        cross_entropy: ce * inv,
        anchor_penalty: pen * inv,
        grad_cross_entropy: g_ce,
        grad_anchor_penalty: g_pen,
    };
    if !parts.cross_entropy.is_finite() || !parts.anchor_penalty.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss terms ce={} penalty={}",
            parts.cross_entropy, parts.anchor_penalty
        )));
    }
    Ok(parts)
}

/// `mean(CE) + β · mean(‖g(x) − z⁰‖²)` and its gradient.
pub fn loss_total(model: &ProbeModel, batch: &[Example]) -> Result<(f64, Gradients)> {
    let parts = loss_parts(model, batch)?;
    let mut grad = parts.grad_cross_entropy;
    grad.axpy(model.beta, &parts.grad_anchor_penalty);
    Ok((
        parts.cross_entropy + model.beta * parts.anchor_penalty,
        grad,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Anchor penalty strength.
    pub beta: f64,
    pub mixup: bool,
    /// Shape of the symmetric Beta distribution mixup λ is drawn from.
    pub mixup_alpha: f64,
    /// Also mix sampled (synthetic) representations.
    pub mixup_synthetic: bool,
    /// Train the adapter; when false it stays the identity.
    pub train_adapter: bool,
    /// Fractions of `epochs` after which the learning rate decays.
    pub lr_milestones: Vec<f64>,
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 128,
            beta: 0.3,
            mixup: true,
            mixup_alpha: 1.0,
            mixup_synthetic: false,
            train_adapter: true,
            lr_milestones: vec![0.5, 0.75],
            lr_decay: 0.1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("need lr > 0 and momentum in [0, 1)"));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::invalid("beta must be >= 0"));
        }
        if self.mixup && !(self.mixup_alpha > 0.0) {
            return Err(Error::invalid("mixup_alpha must be > 0"));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        let progress = epoch as f64 / self.epochs as f64;
        let steps = self
            .lr_milestones
            .iter()
            .filter(|&&m| progress >= m)
            .count();
        self.lr * self.lr_decay.powi(steps as i32)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ProbeModel,
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Exact minimiser of `‖Θ − Θ'‖²/(2 lr) + β mean‖Θ x̃ − z⁰‖²` over the
/// adapter `Θ = [W | b]`, for the anchored examples of a batch.
fn anchor_prox(adapter: &mut Affine, batch: &[Example], beta: f64, lr: f64) {
    let dim = adapter.bias.len();
    let c = 2.0 * beta * lr / batch.len() as f64;
    let mut gram = DMatrix::<f64>::identity(dim + 1, dim + 1);
    let mut rhs = DMatrix::<f64>::zeros(dim, dim + 1);
    for r in 0..dim {
        for col in 0..dim {
            rhs[(r, col)] = adapter.weights[(r, col)];
        }
        rhs[(r, dim)] = adapter.bias[r];
    }
    let mut any = false;
    for ex in batch {
        let Some(anchor) = &ex.anchor else { continue };
        any = true;
        let xt: Vec<f64> = ex.input.iter().copied().chain([1.0]).collect();
        for i in 0..=dim {
            for j in 0..=dim {
                gram[(i, j)] += c * xt[i] * xt[j];
            }
        }
        for r in 0..dim {
            for j in 0..=dim {
                rhs[(r, j)] += c * anchor[r] * xt[j];
            }
        }
    }
    if !any {
        return;
    }
    let chol = gram
        .cholesky()
        .expect("identity plus a Gram matrix is positive definite");
    let theta_t = chol.solve(&rhs.transpose());
    for r in 0..dim {
        for col in 0..dim {
            adapter.weights[(r, col)] = theta_t[(col, r)];
        }
        adapter.bias[r] = theta_t[(dim, r)];
    }
}

/// Minibatch gradient descent with momentum.
///
/// `synthetic[i]` marks sampled representations; every other item is
/// anchored to itself. The cross-entropy part takes a momentum step, then
/// the anchor penalty is applied as an exact proximal step on the adapter,
/// which stays stable for arbitrarily large `beta`.
///
/// Streams: `shuffle` orders each epoch, `mixup` draws λ and partners.
pub fn train_probe(
    data: &LabeledEmbeddings,
    synthetic: &[bool],
    cfg: &TrainConfig,
    rng: &RandomStream,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if synthetic.len() != data.len() {
        return Err(Error::ShapeMismatch(format!(
            "synthetic mask has {} entries for {} items",
            synthetic.len(),
            data.len()
        )));
    }
    let (dim, k) = (data.dim(), data.num_classes());
    let mut model = ProbeModel::new(dim, k, cfg.beta, cfg.mixup_alpha);
    model.class_counts = data.class_counts();
    let mut velocity = Gradients::zeros(dim, k);
    let mut shuffle = rng.child("shuffle");
    let mut mixer = rng.child("mixup");
    let lambda_dist = if cfg.mixup {
        Some(
            Beta::new(cfg.mixup_alpha, cfg.mixup_alpha)
                .map_err(|e| Error::invalid(e.to_string()))?,
        )
    } else {
        None
    };

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch: Vec<Example> = chunk
                .iter()
                .map(|&i| {
                    let x = data.vectors()[i].clone();
                    let t = one_hot(data.labels()[i], k);
                    if synthetic[i] {
                        Example::sampled(x, t)
                    } else {
                        Example::anchored(x, t)
                    }
                })
                .collect();
            if let Some(dist) = &lambda_dist {
                mix_batch(
                    &mut batch,
                    dist.sample(&mut mixer),
                    cfg.mixup_synthetic,
                    &mut mixer,
                )?;
            }

            let parts = loss_parts(&model, &batch)
                .map_err(|e| Error::Diverged(format!("epoch {epoch}: {e}")))?;
            loss_sum += parts.cross_entropy + cfg.beta * parts.anchor_penalty;
            batches += 1;

            let mut grad = parts.grad_cross_entropy;
            if !cfg.train_adapter {
                grad.adapter.scale(0.0);
            }
            velocity.scale(cfg.momentum);
            velocity.axpy(1.0, &grad);
            model.head.axpy(-lr, &velocity.head);
            if cfg.train_adapter {
                model.adapter.axpy(-lr, &velocity.adapter);
                if cfg.beta > 0.0 {
                    anchor_prox(&mut model.adapter, &batch, cfg.beta, lr);
                }
            }
            if !model.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite parameters in epoch {epoch} (lr {lr})"
                )));
            }
        }
        epoch_losses.push(loss_sum / batches as f64);
    }
    Ok(TrainOutcome {
        model,
        epoch_losses,
    })
}

/// Mixes the eligible examples of a batch with a random permutation of
/// themselves using one λ for the whole batch.
fn mix_batch(
    batch: &mut [Example],
    lambda: f64,
    include_sampled: bool,
    rng: &mut RandomStream,
) -> Result<()> {
    let eligible: Vec<usize> = (0..batch.len())
        .filter(|&i| include_sampled || batch[i].anchor.is_some())
        .collect();
    if eligible.len() < 2 {
        return Ok(());
    }
    let mut partners = eligible.clone();
    partners.shuffle(rng);
    let originals: Vec<Example> = eligible.iter().map(|&i| batch[i].clone()).collect();
    let by_index = |i: usize| &originals[eligible.binary_search(&i).expect("eligible")];
    for (&i, &j) in eligible.iter().zip(&partners) {
        let (a, b) = (by_index(i), by_index(j));
        let (x, t) = mixup_pair(&a.input, &a.target, &b.input, &b.target, lambda)?;
        batch[i] = match a.anchor {
            Some(_) => Example::anchored(x, t),
            None => Example::sampled(x, t),
        };
    }
    Ok(())
}

/// Bayes-optimal linear rule for Gaussian classes with a shared covariance.
#[derive(Debug, Clone)]
pub struct FisherDiscriminant {
    directions: Vec<DVector<f64>>,
    offsets: Vec<f64>,
}

impl FisherDiscriminant {
    pub fn new(model: &GroundTruthModel) -> Self {
        let precision = linalg::inverse_with_ridge(&model.shared_covariance);
        let n = model.total() as f64;
        let mut directions = Vec::with_capacity(model.num_classes());
        let mut offsets = Vec::with_capacity(model.num_classes());
        for (mu, &count) in model.means.iter().zip(&model.counts) {
            let mu = DVector::from_column_slice(mu);
            let w = &precision * &mu;
            offsets.push((count as f64 / n).ln() - 0.5 * mu.dot(&w));
            directions.push(w);
        }
        Self {
            directions,
            offsets,
        }
    }

    pub fn scores(&self, z: &[f64]) -> Vec<f64> {
        let z = DVector::from_column_slice(z);
        self.directions
            .iter()
            .zip(&self.offsets)
            .map(|(w, b)| b + w.dot(&z))
            .collect()
    }

    pub fn classify(&self, z: &[f64]) -> usize {
        argmax(&self.scores(z))
    }
}

/// `argmax_k log(n_k/n) + μ_kᵀ Σ⁻¹ z − ½ μ_kᵀ Σ⁻¹ μ_k`, ties to the lower id.
pub fn fisher_classify(z: &[f64], model: &GroundTruthModel) -> usize {
    FisherDiscriminant::new(model).classify(z)
}

/// InfoNCE loss `−log softmax(q·k/τ)` of the positive key among `queue`,
/// which must contain the positive key.
pub fn contrastive_loss(
    query: &[f64],
    positive: &[f64],
    queue: &[Vec<f64>],
    tau: f64,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!(
            "temperature must be > 0, got {tau}"
        )));
    }
    if !queue.iter().any(|k| k.as_slice() == positive) {
        return Err(Error::invalid("positive key is not in the queue"));
    }
    let logits: Vec<f64> = queue.iter().map(|k| linalg::dot(query, k) / tau).collect();
    let loss = log_sum_exp(&logits) - linalg::dot(query, positive) / tau;
    Ok(loss.max(0.0))
}

#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s.sqrt()
}

/// Textbook O(n²) LOF: full distance matrix, k-distance from a sorted row,
/// neighbourhoods with ties, reach-dist `max(k-dist(o), d(p, o))`,
/// `lrd = 1 / (mean reach-dist + 1e-10)`, sums in ascending index.
pub fn brute_lof(points: &[Vec<f64>], k: usize) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            d[i][j] = euclid(&points[i], &points[j]);
        }
    }
    let mut kdist = vec![0.0; n];
    let mut hood: Vec<Vec<usize>> = vec![Vec::new(); n];
    for p in 0..n {
        let mut others: Vec<f64> = (0..n).filter(|&o| o != p).map(|o| d[p][o]).collect();
        others.sort_by(|a, b| a.partial_cmp(b).unwrap());
        kdist[p] = others[k - 1];
        for o in 0..n {
            if o != p && d[p][o] <= kdist[p] {
                hood[p].push(o);
            }
        }
    }
    let mut lrd = vec![0.0; n];
    for p in 0..n {
        let mut s = 0.0;
        for &o in &hood[p] {
            s += if kdist[o] > d[p][o] {
                kdist[o]
            } else {
                d[p][o]
            };
        }
        lrd[p] = 1.0 / (s / hood[p].len() as f64 + 1e-10);
    }
    (0..n)
        .map(|p| {
            let mut s = 0.0;
            for &o in &hood[p] {
                s += lrd[o];
            }
            (s / hood[p].len() as f64) / lrd[p]
        })
        .collect()
}

/// Random symmetric PSD matrix `A Aᵀ / m` with standard normal `A`.
pub fn random_psd(m: usize, r: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| r.sample::<f64, _>(rand_distr::StandardNormal));
    let s = &a * a.transpose() / m as f64;
    (&s + s.transpose()) * 0.5
}

use calibre_core::train::{loss_total, Affine, Example, ProbeModel};

fn param_mut(model: &mut ProbeModel, head: bool, r: usize, c: usize) -> &mut f64 {
    let a: &mut Affine = if head {
        &mut model.head
    } else {
        &mut model.adapter
    };
    if c == a.weights.ncols() {
        &mut a.bias[r]
    } else {
        &mut a.weights[(r, c)]
    }
}

fn grad_entry(a: &Affine, r: usize, c: usize) -> f64 {
    if c == a.weights.ncols() {
        a.bias[r]
    } else {
        a.weights[(r, c)]
    }
}

/// Worst relative gap between the analytic gradient of `loss_total` and
/// central differences with step `h`, over every parameter. The relative
/// scale is floored at 1e-3.
pub fn worst_fd_error(model: &mut ProbeModel, batch: &[Example], h: f64) -> f64 {
    let (m, k) = (model.dim(), model.num_classes());
    let (_, grad) = loss_total(model, batch).unwrap();
    let mut worst = 0.0f64;
    for head in [false, true] {
        let rows = if head { k } else { m };
        for r in 0..rows {
            for c in 0..=m {
                let orig = *param_mut(model, head, r, c);
                *param_mut(model, head, r, c) = orig + h;
                let up = loss_total(model, batch).unwrap().0;
                *param_mut(model, head, r, c) = orig - h;
                let down = loss_total(model, batch).unwrap().0;
                *param_mut(model, head, r, c) = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grad_entry(if head { &grad.head } else { &grad.adapter }, r, c);
                worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-3));
            }
        }
    }
    worst
}

/// Random model with perturbed parameters and a random mixed batch of
/// sampled and anchored examples with soft targets.
pub fn random_problem(r: &mut impl Rng) -> (ProbeModel, Vec<Example>) {
    use rand_distr::StandardNormal;
    let m = r.random_range(1..=6);
    let k = r.random_range(2..=6);
    let mut model = ProbeModel::new(m, k, r.random_range(0.0..3.0), 1.0);
    for a in [&mut model.adapter, &mut model.head] {
        a.weights
            .iter_mut()
            .for_each(|w| *w += 0.5 * r.sample::<f64, _>(StandardNormal));
        a.bias
            .iter_mut()
            .for_each(|b| *b += 0.5 * r.sample::<f64, _>(StandardNormal));
    }
    let batch = (0..r.random_range(1..=8))
        .map(|_| {
            let input: Vec<f64> = (0..m).map(|_| r.sample(StandardNormal)).collect();
            let lam: f64 = r.random_range(0.0..1.0);
            let mut target = vec![0.0; k];
            target[r.random_range(0..k)] += lam;
            target[r.random_range(0..k)] += 1.0 - lam;
            match r.random_range(0..3) {
                0 => Example::sampled(input, target),
                1 => Example::anchored(input, target),
                _ => Example {
                    anchor: Some((0..m).map(|_| r.sample(StandardNormal)).collect()),
                    input,
                    target,
                },
            }
        })
        .collect();
    (model, batch)
}

//! Independent reference computations used by the integration tests.
//!
//! Nothing here calls into the library's numeric paths: forward passes, loss
//! and metrics are recomputed with plain loops over `Vec`s.

#![allow(dead_code)]

use entail::label::FactifyLabel;
use entail::nn::{Activation, MlpModel, Mode};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// (weights[in][out], bias[out], activation, reg).
pub type PlainLayer = (Vec<Vec<f64>>, Vec<f64>, Activation, f64);

/// Copies the model's parameters into nested `Vec`s.
pub fn plain_layers(model: &MlpModel) -> Vec<PlainLayer> {
    model
        .layers()
        .iter()
        .map(|l| {
            let w = l.weights();
            let rows = (0..w.nrows())
                .map(|i| (0..w.ncols()).map(|j| w[[i, j]]).collect())
                .collect();
            (
                rows,
                l.bias().to_vec(),
                l.spec().activation,
                l.spec().activity_reg,
            )
        })
        .collect()
}

/// Straight-line inference forward pass; returns (probabilities, post-activations per layer).
pub fn oracle_forward(model: &MlpModel, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut h = x.to_vec();
    let mut acts = Vec::new();
    for (w, b, act, _) in plain_layers(model) {
        let mut out = vec![0.0; b.len()];
        for j in 0..b.len() {
            let mut z = b[j];
            for i in 0..h.len() {
                z += h[i] * w[i][j];
            }
            out[j] = match act {
                Activation::Relu => {
                    if z > 0.0 {
                        z
                    } else {
                        0.0
                    }
                }
                Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            };
        }
        acts.push(out.clone());
        h = out;
    }
    let max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = h.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (exps.iter().map(|e| e / sum).collect(), acts)
}

/// Mean cross-entropy plus activity penalty, recomputed row by row.
pub fn oracle_loss(model: &MlpModel, x: &Array2<f64>, labels: &[usize]) -> f64 {
    let layers = plain_layers(model);
    let n = labels.len() as f64;
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row: Vec<f64> = x.row(r).to_vec();
        let (p, acts) = oracle_forward(model, &row);
        total -= p[y].max(1e-12).ln() / n;
        for ((_, _, _, reg), a) in layers.iter().zip(&acts) {
            total += reg * a.iter().map(|v| v * v).sum::<f64>() / n;
        }
    }
    total
}

/// Central finite-difference gradient of the model's loss for every parameter.
pub fn finite_difference_gradient(
    model: &MlpModel,
    x: &Array2<f64>,
    labels: &[usize],
    mode: Mode,
    h: f64,
) -> Vec<f64> {
    let n = model.num_parameters();
    let mut out = Vec::with_capacity(n);
    let mut probe = model.clone();
    for k in 0..n {
        let original = *probe.parameters_mut().nth(k).unwrap();
        *probe.parameters_mut().nth(k).unwrap() = original + h;
        let plus = probe.loss(x.view(), labels, mode).unwrap();
        *probe.parameters_mut().nth(k).unwrap() = original - h;
        let minus = probe.loss(x.view(), labels, mode).unwrap();
        *probe.parameters_mut().nth(k).unwrap() = original;
        out.push((plus - minus) / (2.0 * h));
    }
    out
}

/// Denominator floor for relative errors, so parameters whose true gradient
/// is exactly zero (dead ReLU units) compare on absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-8;

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_ERR_FLOOR))
        .fold(0.0, f64::max)
}

/// Per-class scores computed straight from the label lists.
pub struct TallyOracle {
    pub precision: [f64; 5],
    pub recall: [f64; 5],
    pub f1: [f64; 5],
    pub support: [u64; 5],
    pub weighted_f1: f64,
    pub cells: [[u64; 5]; 5],
}

pub fn tally_oracle(gold: &[FactifyLabel], pred: &[FactifyLabel]) -> TallyOracle {
    let mut o = TallyOracle {
        precision: [0.0; 5],
        recall: [0.0; 5],
        f1: [0.0; 5],
        support: [0; 5],
        weighted_f1: 0.0,
        cells: [[0; 5]; 5],
    };
    for (gi, g) in FactifyLabel::ALL.iter().enumerate() {
        for (pi, p) in FactifyLabel::ALL.iter().enumerate() {
            for k in 0..gold.len() {
                if gold[k] == *g && pred[k] == *p {
                    o.cells[gi][pi] += 1;
                }
            }
        }
    }
    for (c, label) in FactifyLabel::ALL.iter().enumerate() {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fnn = 0u64;
        for k in 0..gold.len() {
            match (gold[k] == *label, pred[k] == *label) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fnn += 1,
                _ => {}
            }
        }
        let p = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let r = if tp + fnn == 0 {
            0.0
        } else {
            tp as f64 / (tp + fnn) as f64
        };
        o.precision[c] = p;
        o.recall[c] = r;
        o.f1[c] = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        o.support[c] = tp + fnn;
    }
    let n = gold.len() as f64;
    o.weighted_f1 = (0..5).map(|c| o.support[c] as f64 / n * o.f1[c]).sum();
    o
}

pub fn random_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<FactifyLabel> {
    (0..n)
        .map(|_| FactifyLabel::ALL[rng.gen_range(0..5)])
        .collect()
}

/// Three Gaussian classes in `dim` dimensions with unit-variance noise.
/// Class `k` is centered on axis `k`, placed so every pair of centers is
/// `center_distance` apart.
pub fn gaussian_blobs(
    per_class: usize,
    dim: usize,
    center_distance: f64,
    seed: u64,
) -> (Array2<f64>, Vec<usize>) {
    let separation = center_distance / 2f64.sqrt();
    let mut rng = rng(seed);
    let n = 3 * per_class;
    let mut x = Array2::zeros((n, dim));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 3;
        for j in 0..dim {
            let noise: f64 = rng.sample(StandardNormal);
            x[[i, j]] = noise + if j == class { separation } else { 0.0 };
        }
        y.push(class);
    }
    (x, y)
}

//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seaterra::cae::{
    conv_linear, conv_transpose_linear, gradients, loss, ArchSpec, CaeNetwork, ConvGeometry, Filter,
};
use seaterra::rost::{RostConfig, RostModel};
use seaterra::tensor::Tensor3;
use seaterra::vocab::WordObservation;

/// ln Γ(x + n) / Γ(x) as a sum of logs.
fn ln_rising(x: f64, n: u32) -> f64 {
    (0..n).map(|j| (x + j as f64).ln()).sum()
}

/// Exact posterior over all `k^n` assignments of words that share one neighborhood.
/// Index `Σ z_i k^i`.
pub fn exact_posterior(words: &[usize], k: usize, vocab: usize, alpha: f64, beta: f64) -> Vec<f64> {
    let n = words.len();
    let states = k.pow(n as u32);
    let log_w: Vec<f64> = (0..states)
        .map(|s| {
            let mut nkv = vec![vec![0u32; vocab]; k];
            let mut code = s;
            for &v in words {
                nkv[code % k][v] += 1;
                code /= k;
            }
            nkv.iter()
                .map(|row| {
                    let nk: u32 = row.iter().sum();
                    row.iter().map(|&c| ln_rising(beta, c)).sum::<f64>()
                        - ln_rising(vocab as f64 * beta, nk)
                        + ln_rising(alpha, nk)
                })
                .sum()
        })
        .collect();
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

pub struct GibbsCheck {
    pub tv: f64,
    pub states: usize,
}

/// Runs the fixed-K sampler on six words in one cell and compares the empirical joint
/// assignment distribution with exact enumeration.
pub fn gibbs_oracle(sweeps: usize, seed: u64) -> GibbsCheck {
    let words = [0usize, 0, 1, 0, 1, 1];
    let (k, vocab, alpha, beta) = (2usize, 2usize, 1.0, 0.5);
    let cfg = RostConfig {
        alpha,
        beta,
        gamma: 1e-7,
        vocab_size: vocab,
        cell_size: 16,
        temporal_window: 0,
        recent_bias: 1.0,
        seed,
        fixed_topics: Some(k),
    };
    let mut model = RostModel::new(cfg).unwrap();
    let obs: Vec<WordObservation> = words
        .iter()
        .enumerate()
        .map(|(i, &v)| WordObservation { v, row: i, col: 0, t: 0 })
        .collect();
    model.add_observations(&obs).unwrap();
    model.refine(500).unwrap();

    let exact = exact_posterior(&words, k, vocab, alpha, beta);
    let mut hist = vec![0u64; exact.len()];
    for _ in 0..sweeps {
        model.refine(1).unwrap();
        let code = model
            .words_at(0)
            .unwrap()
            .iter()
            .rev()
            .fold(0usize, |acc, (_, z)| acc * k + z);
        hist[code] += 1;
    }
    let tv = 0.5
        * hist
            .iter()
            .zip(&exact)
            .map(|(&h, &p)| (h as f64 / sweeps as f64 - p).abs())
            .sum::<f64>();
    GibbsCheck { tv, states: exact.len() }
}

fn entropy_from_counts<K>(counts: &HashMap<K, usize>, n: f64) -> f64 {
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information as H(a) + H(b) - H(a, b) from hashed counts.
pub fn mi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut ca = HashMap::new();
    let mut cb = HashMap::new();
    let mut cab = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ca.entry(x).or_insert(0) += 1;
        *cb.entry(y).or_insert(0) += 1;
        *cab.entry((x, y)).or_insert(0) += 1;
    }
    entropy_from_counts(&ca, n) + entropy_from_counts(&cb, n) - entropy_from_counts(&cab, n)
}

pub fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let count = |l: &[usize]| {
        let mut m = HashMap::new();
        for &x in l {
            *m.entry(x).or_insert(0usize) += 1;
        }
        m
    };
    let h = entropy_from_counts(&count(a), n).max(entropy_from_counts(&count(b), n));
    if h == 0.0 {
        0.0
    } else {
        mi_oracle(a, b) / h
    }
}

/// Labels drawn from a random contingency table: expands each cell into that many pairs.
pub fn labels_from_table(table: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            a.extend(std::iter::repeat_n(i, c));
            b.extend(std::iter::repeat_n(j, c));
        }
    }
    (a, b)
}

/// Central-difference derivative of the loss for every parameter, in declaration order
/// (filters, encoder biases, decoder biases).
fn numeric_gradient(net: &CaeNetwork<f64>, batch: &[&Tensor3<f64>], step: f64) -> Vec<f64> {
    let mut probe = net.clone();
    let mut out = Vec::new();
    let eval = |probe: &mut CaeNetwork<f64>, get: &dyn Fn(&mut CaeNetwork<f64>) -> &mut f64| {
        let orig = *get(probe);
        *get(probe) = orig + step;
        let plus = loss(probe, batch).unwrap();
        *get(probe) = orig - step;
        let minus = loss(probe, batch).unwrap();
        *get(probe) = orig;
        (plus - minus) / (2.0 * step)
    };
    for l in 0..net.filters.len() {
        for i in 0..net.filters[l].data.len() {
            out.push(eval(&mut probe, &|n| &mut n.filters[l].data[i]));
        }
    }
    for l in 0..net.encoder_bias.len() {
        for i in 0..net.encoder_bias[l].len() {
            out.push(eval(&mut probe, &|n| &mut n.encoder_bias[l][i]));
        }
    }
    for l in 0..net.decoder_bias.len() {
        for i in 0..net.decoder_bias[l].len() {
            out.push(eval(&mut probe, &|n| &mut n.decoder_bias[l][i]));
        }
    }
    out
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-10 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

pub struct GradientCheck {
    pub worst: f64,
    pub parameters: usize,
    pub tensors: usize,
    pub max_abs_gradient: f64,
}

/// Tiny arch with weight decay and nonzero biases, batch of three random inputs; step 1e-4.
pub fn gradient_check(seed: u64) -> GradientCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = ArchSpec {
        weight_decay: 1e-2,
        seed: 7,
        ..ArchSpec::tiny()
    };
    let mut net = CaeNetwork::<f64>::new(arch).unwrap();
    for b in net.encoder_bias.iter_mut().chain(net.decoder_bias.iter_mut()) {
        for v in b {
            *v = rng.random_range(0.05..0.2);
        }
    }
    let xs: Vec<Tensor3<f64>> = (0..3)
        .map(|_| Tensor3::from_fn(8, 8, 1, |_, _, _| rng.random_range(0.0..1.0)))
        .collect();
    let batch: Vec<&Tensor3<f64>> = xs.iter().collect();

    let analytic: Vec<f64> = gradients(&net, &batch).unwrap().iter().copied().collect();
    let numeric = numeric_gradient(&net, &batch, 1e-4);
    assert_eq!(analytic.len(), numeric.len());
    GradientCheck {
        worst: analytic
            .iter()
            .zip(&numeric)
            .map(|(&a, &n)| relative_error(a, n))
            .fold(0.0, f64::max),
        parameters: analytic.len(),
        tensors: net.filters.len() + net.encoder_bias.len() + net.decoder_bias.len(),
        max_abs_gradient: analytic.iter().fold(0.0, |m, g| m.max(g.abs())),
    }
}

/// `<conv(x), y> = <x, convᵀ(y)>` over random 6×6 inputs with varied filters and strides.
pub fn adjoint_worst_error(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let stride = 1 + trial % 2;
        let size = [1, 2, 3, 4][trial % 4];
        let (ci, co) = (1 + trial % 3, 1 + (trial / 3) % 3);
        let filter = Filter::<f64>::from_fn(size, ci, co, |_, _, _, _| rng.random_range(-1.0..1.0));
        let geom = ConvGeometry::same(6, 6, size, stride);
        let x = Tensor3::from_fn(6, 6, ci, |_, _, _| rng.random_range(-1.0..1.0));
        let y = Tensor3::from_fn(geom.out_h, geom.out_w, co, |_, _, _| rng.random_range(-1.0..1.0));
        let lhs = conv_linear(&x, &filter, &geom).dot(&y);
        let rhs = x.dot(&conv_transpose_linear(&y, &filter, &geom));
        worst = worst.max(relative_error(lhs, rhs));
    }
    worst
}

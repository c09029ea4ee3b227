#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use shapprop::network::{generate_random_model, Arch};
use shapprop::{EvalCounter, Layer, Model, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn vector(data: Vec<f64>) -> Tensor {
    Tensor::vector(data).unwrap()
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    let d = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

pub fn dense(rows: usize, cols: usize, weights: Vec<f64>, bias: Vec<f64>) -> Layer {
    Layer::Dense {
        weights: tensor(&[rows, cols], weights),
        bias: vector(bias),
    }
}

/// `n -> hidden -> relu -> out` with `N(0, 2/fan_in)` weights.
pub fn mlp(seed: u64, n: usize, hidden: usize, out: usize) -> Model {
    let arch: Arch = format!("{n}-{hidden}-relu-{out}").parse().unwrap();
    generate_random_model(seed, &arch).unwrap()
}

pub fn arch_model(seed: u64, arch: &str) -> Model {
    generate_random_model(seed, &arch.parse().unwrap()).unwrap()
}

/// Single dense layer `n -> out`.
pub fn linear_model(seed: u64, n: usize, out: usize) -> Model {
    let mut r = rng(seed);
    let w = normals(&mut r, n * out, 1.0);
    let b = normals(&mut r, out, 1.0);
    Model::new(vec![n], vec![dense(out, n, w, b)]).unwrap()
}

/// Replaces the dense weights of layer `index` via `edit(rows, cols, &mut w)`.
pub fn edit_dense(
    model: &Model,
    index: usize,
    edit: impl FnOnce(usize, usize, &mut Vec<f64>),
) -> Model {
    let mut layers = model.layers().to_vec();
    let Layer::Dense { weights, bias } = &layers[index] else {
        panic!("layer {index} is not dense");
    };
    let (rows, cols) = (weights.shape()[0], weights.shape()[1]);
    let mut w = weights.data().to_vec();
    edit(rows, cols, &mut w);
    layers[index] = Layer::Dense {
        weights: tensor(&[rows, cols], w),
        bias: bias.clone(),
    };
    Model::new(model.input_shape().to_vec(), layers).unwrap()
}

pub fn f(model: &Model, x: &[f64], class: usize) -> f64 {
    let t = tensor(model.input_shape(), x.to_vec());
    model.forward(&t, &EvalCounter::new()).unwrap().data()[class]
}

/// Coalition input: features in `mask` from `x`, the rest from `baseline`.
pub fn masked(x: &[f64], baseline: &[f64], mask: u64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            if mask >> j & 1 == 1 {
                x[j]
            } else {
                baseline[j]
            }
        })
        .collect()
}

pub fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Shapley values as `sum_S [f(S+i) - f(S)] / (N * C(N-1, |S|))`, one
/// subset at a time without memoization.
pub fn subset_oracle(model: &Model, x: &[f64], baseline: &[f64], class: usize) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut total = 0.0;
            for s in 0u64..1 << n {
                if s >> i & 1 == 1 {
                    continue;
                }
                let size = s.count_ones() as usize;
                let gain = f(model, &masked(x, baseline, s | 1 << i), class)
                    - f(model, &masked(x, baseline, s), class);
                total += gain / (n as f64 * binomial(n - 1, size));
            }
            total
        })
        .collect()
}

/// Shapley values as the average marginal contribution over all `N!`
/// orderings.
pub fn permutation_oracle(model: &Model, x: &[f64], baseline: &[f64], class: usize) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut totals = vec![0.0; n];
    let mut count = 0usize;
    loop {
        let mut mask = 0u64;
        let mut prev = f(model, &masked(x, baseline, mask), class);
        for &i in &order {
            mask |= 1 << i;
            let next = f(model, &masked(x, baseline, mask), class);
            totals[i] += next - prev;
            prev = next;
        }
        count += 1;
        if !next_permutation(&mut order) {
            break;
        }
    }
    totals.iter().map(|t| t / count as f64).collect()
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// All `k`-subsets of `items`.
pub fn k_subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(
        items: &[usize],
        k: usize,
        start: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for idx in start..items.len() {
            if items.len() - idx < k - cur.len() {
                break;
            }
            cur.push(items[idx]);
            rec(items, k, idx + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::new(), &mut out);
    out
}

/// `k` distinct indices drawn uniformly from `items`.
pub fn draw_subset(rng: &mut ChaCha8Rng, items: &[usize], k: usize) -> Vec<usize> {
    let mut pool = items.to_vec();
    for j in 0..k {
        let pick = rng.random_range(j..pool.len());
        pool.swap(j, pick);
    }
    pool.truncate(k);
    pool
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

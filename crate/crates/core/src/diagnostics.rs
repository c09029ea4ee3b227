//! Monte-Carlo validation of the moment-matching machinery.
//!
//! Each check compares a closed-form moment against a sampling estimate and
//! passes when the gap is within a fixed number of Monte-Carlo standard
//! errors (or a relative tolerance for the coalition statistics). The CLI's
//! `moments-check` command runs them all.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::coalition::{FirstLayerProjector, ScalingMode};
use crate::harness::EvalCounter;
use crate::math::{max_pair_moments, relu_gaussian_moments, MomentPair};
use crate::network::{generate_random_model, random_input, Layer, Model};
use crate::probnet::{propagate_max, propagate_tail, GaussianActivation};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy)]
pub struct CheckSettings {
    /// Monte-Carlo samples per case.
    pub samples: usize,
    /// Random cases per check.
    pub cases: usize,
    pub seed: u64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            samples: 1_000_000,
            cases: 100,
            seed: 0,
        }
    }
}

/// Sample mean, variance and the standard errors of both.
#[derive(Debug, Clone, Copy)]
pub struct SampleMoments {
    pub mean: f64,
    pub variance: f64,
    pub mean_se: f64,
    pub variance_se: f64,
}

/// Moments of `f(Z)` over `samples` draws of a standard normal vector of
/// length `dim`.
pub fn sample_moments<F>(samples: usize, seed: u64, dim: usize, f: F) -> SampleMoments
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    const CHUNK: usize = 1 << 14;
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[c as u64]));
            let mut z = vec![0.0; dim];
            let n = CHUNK.min(samples - c * CHUNK);
            (0..n)
                .map(|_| {
                    for v in z.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    f(&z)
                })
                .collect()
        })
        .collect();
    let values: Vec<f64> = partial.into_iter().flatten().collect();
    summarize(&values)
}

/// Sample moments and standard errors of a list of draws.
pub fn summarize(values: &[f64]) -> SampleMoments {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in values {
        let d = v - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    let variance = m2 / (n - 1.0);
    let m4 = m4 / n;
    let pop_var = m2 / n;
    SampleMoments {
        mean,
        variance,
        mean_se: (variance / n).sqrt(),
        variance_se: ((m4 - pop_var * pop_var).max(0.0) / n).sqrt(),
    }
}

fn within(value: f64, est: f64, se: f64, k: f64) -> bool {
    (value - est).abs() <= k * se + 1e-12
}

/// Rectified Gaussian moments vs sampling on random `(μ, σ²)`.
pub fn check_relu(settings: &CheckSettings) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for case in 0..settings.cases {
        let mean = rng.random_range(-5.0..5.0);
        let variance = rng.random_range(1e-4..4.0);
        let closed = relu_gaussian_moments(MomentPair::new(mean, variance));
        let sd = variance.sqrt();
        let est = sample_moments(
            settings.samples,
            seed::derive(settings.seed, &[1, case as u64]),
            1,
            |z| (mean + sd * z[0]).max(0.0),
        );
        let zm = (closed.mean - est.mean).abs() / est.mean_se.max(1e-300);
        let zv = (closed.variance - est.variance).abs() / est.variance_se.max(1e-300);
        worst = worst.max(zm).max(zv);
        if !within(closed.mean, est.mean, est.mean_se, 4.0)
            || !within(closed.variance, est.variance, est.variance_se, 4.0)
        {
            failures += 1;
        }
    }
    CheckOutcome {
        name: "relu moments vs Monte Carlo (4 SE)".into(),
        passed: failures == 0,
        detail: format!(
            "{} cases, {failures} failures, worst {worst:.2} SE",
            settings.cases
        ),
    }
}

/// Pairwise Gaussian max moments vs sampling on random pairs.
pub fn check_max_pair(settings: &CheckSettings) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x5eed);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for case in 0..settings.cases {
        let a = MomentPair::new(rng.random_range(-5.0..5.0), rng.random_range(1e-4..4.0));
        let b = MomentPair::new(rng.random_range(-5.0..5.0), rng.random_range(1e-4..4.0));
        let closed = max_pair_moments(a, b);
        let (sa, sb) = (a.std_dev(), b.std_dev());
        let est = sample_moments(
            settings.samples,
            seed::derive(settings.seed, &[2, case as u64]),
            2,
            |z| (a.mean + sa * z[0]).max(b.mean + sb * z[1]),
        );
        let zm = (closed.mean - est.mean).abs() / est.mean_se.max(1e-300);
        let zv = (closed.variance - est.variance).abs() / est.variance_se.max(1e-300);
        worst = worst.max(zm).max(zv);
        if !within(closed.mean, est.mean, est.mean_se, 4.0)
            || !within(closed.variance, est.variance, est.variance_se, 4.0)
        {
            failures += 1;
        }
    }
    CheckOutcome {
        name: "max-of-two moments vs Monte Carlo (4 SE)".into(),
        passed: failures == 0,
        detail: format!(
            "{} cases, {failures} failures, worst {worst:.2} SE",
            settings.cases
        ),
    }
}

/// Four-way max pooling of i.i.d. standard normals vs the sampled maximum.
///
/// The pairwise tournament is itself an approximation, so the pooled mean is
/// held to 1% of the sampled mean rather than to its standard error.
pub fn check_max_of_four(settings: &CheckSettings) -> CheckOutcome {
    let pool = Layer::MaxPool { window: vec![4] };
    let g = GaussianActivation::new(
        Tensor::new(vec![4, 1], vec![0.0; 4]).expect("shape"),
        Tensor::new(vec![4, 1], vec![1.0; 4]).expect("shape"),
    )
    .expect("valid");
    let out = propagate_max(&pool, &g).expect("window fits").unit(0);
    let est = sample_moments(
        settings.samples,
        seed::derive(settings.seed, &[3]),
        4,
        |z| z.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let err = (out.mean - est.mean).abs();
    CheckOutcome {
        name: "max pooling over 4 i.i.d. normals (1%)".into(),
        passed: err <= 0.01 * est.mean.abs(),
        detail: format!(
            "pooled mean {:.6}, sampled {:.6}, {:.2}% ({:.2} SE)",
            out.mean,
            est.mean,
            100.0 * err / est.mean.abs(),
            err / est.mean_se
        ),
    }
}

/// First-layer coalition statistics vs uniformly sampled coalitions.
pub fn check_coalition(settings: &CheckSettings) -> CheckOutcome {
    let arch = "10-16".parse().expect("valid arch");
    let cases = settings.cases.clamp(1, 20);
    let draws = (settings.samples / 10).max(1000);
    let mut failures = 0;
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for case in 0..cases {
        let s = seed::derive(settings.seed, &[4, case as u64]);
        let model = generate_random_model(s, &arch).expect("valid arch");
        let x = random_input(&[10], s ^ 1);
        let (mean_err, var_err) = coalition_errors(&model, &x, 0, 4, draws, s ^ 2);
        worst_mean = worst_mean.max(mean_err);
        worst_var = worst_var.max(var_err);
        if mean_err > 0.01 || var_err > 0.02 {
            failures += 1;
        }
    }
    CheckOutcome {
        name: "coalition statistics vs sampled 4-subsets".into(),
        passed: failures == 0,
        detail: format!(
            "{cases} layers, {draws} draws, worst mean err {worst_mean:.4} sd, worst var err {:.2}%",
            100.0 * worst_var
        ),
    }
}

/// Largest mean error (in units of the empirical standard deviation) and
/// largest relative variance error over first-layer units, comparing the
/// closed-form statistics for `(i, k)` with `draws` sampled coalitions.
pub fn coalition_errors(
    model: &Model,
    x: &Tensor,
    i: usize,
    k: usize,
    draws: usize,
    seed: u64,
) -> (f64, f64) {
    let Some(Layer::Dense { weights, bias }) = model.layers().first() else {
        panic!("coalition check expects a dense first layer");
    };
    let n = x.len();
    let (units, w, b) = (weights.shape()[0], weights.data(), bias.data());
    let baseline = Tensor::zeros(x.shape().to_vec()).expect("shape");
    let stats = FirstLayerProjector::new(model, x, &baseline)
        .and_then(|p| p.stats(i, k, ScalingMode::Corrected))
        .expect("valid request");
    let others: Vec<usize> = (0..n).filter(|&l| l != i).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_unit = vec![Vec::with_capacity(draws); units];
    for _ in 0..draws {
        let chosen = sample(&mut rng, others.len(), k);
        for (j, out) in per_unit.iter_mut().enumerate() {
            let z: f64 = chosen
                .iter()
                .map(|c| w[j * n + others[c]] * x.data()[others[c]])
                .sum();
            out.push(z + b[j]);
        }
    }
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for (j, vals) in per_unit.iter().enumerate() {
        let est = summarize(vals);
        let sd = est.variance.sqrt().max(1e-12);
        worst_mean = worst_mean.max((stats.mu.data()[j] - est.mean).abs() / sd);
        worst_var =
            worst_var.max((stats.var.data()[j] - est.variance).abs() / est.variance.max(1e-12));
    }
    (worst_mean, worst_var)
}

/// Output mean of a ReLU tail under Gaussian inputs vs sampling.
pub fn check_tail(settings: &CheckSettings) -> CheckOutcome {
    let arch = "1-6-relu-1".parse().expect("valid arch");
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let cases = settings.cases.clamp(1, 20);
    for case in 0..cases {
        let s = seed::derive(settings.seed, &[5, case as u64]);
        let model = generate_random_model(s, &arch).expect("valid arch");
        // Random Gaussian pre-activations for the hidden layer.
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let normal = Normal::new(0.0, 1.0).expect("valid");
        let mean: Vec<f64> = (0..6).map(|_| normal.sample(&mut rng)).collect();
        let var: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..2.0)).collect();
        let g = GaussianActivation::new(
            Tensor::vector(mean.clone()).expect("shape"),
            Tensor::vector(var.clone()).expect("shape"),
        )
        .expect("valid");
        let out = propagate_tail(&model, 1, &g, 0, &EvalCounter::new()).expect("valid tail");
        let est = sample_moments(settings.samples, s ^ 7, 6, |z| {
            let act: Vec<f64> = z
                .iter()
                .zip(mean.iter().zip(&var))
                .map(|(z, (m, v))| m + v.sqrt() * z)
                .collect();
            model.evaluate_range(1, act)[0]
        });
        let z = (out.mean - est.mean).abs() / est.mean_se;
        worst = worst.max(z);
        if !within(out.mean, est.mean, est.mean_se, 3.0) {
            failures += 1;
        }
    }
    CheckOutcome {
        name: "relu tail output mean vs Monte Carlo (3 SE)".into(),
        passed: failures == 0,
        detail: format!("{cases} tails, {failures} failures, worst {worst:.2} SE"),
    }
}

/// Every check, in a fixed order.
pub fn run_all(settings: &CheckSettings) -> Vec<CheckOutcome> {
    vec![
        check_relu(settings),
        check_max_pair(settings),
        check_max_of_four(settings),
        check_coalition(settings),
        check_tail(settings),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summarize_known_values() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn small_runs_pass() {
        let settings = CheckSettings {
            samples: 1_000_000,
            cases: 3,
            seed: 1,
        };
        for outcome in run_all(&settings) {
            assert!(outcome.passed, "{}: {}", outcome.name, outcome.detail);
        }
    }
}

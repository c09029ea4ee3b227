use rayon::prelude::*;

use super::{check_request, ordered_sum, AttributionResult, Method};
use crate::error::{Error, Result};
use crate::harness::EvalCounter;
use crate::network::Model;
use crate::tensor::Tensor;

/// `R_i = x_i ∂f_c/∂x_i`. Costs 2 (forward plus backward).
pub fn gradient_x_input(
    model: &Model,
    x: &Tensor,
    class: usize,
    counter: &EvalCounter,
) -> Result<AttributionResult> {
    let grad = model.gradient(x, class, counter)?;
    let values = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(a, g)| a * g)
        .collect();
    Ok(AttributionResult::new(
        Method::GradientXInput,
        class,
        values,
        2,
    ))
}

/// Integrated gradients along the straight path from the baseline to `x`,
/// using the midpoint rule with `steps` gradient evaluations.
pub fn integrated_gradients(
    model: &Model,
    x: &Tensor,
    class: usize,
    steps: usize,
    baseline: &Tensor,
    counter: &EvalCounter,
) -> Result<AttributionResult> {
    let n = check_request(model, x, class, baseline)?;
    if steps == 0 {
        return Err(Error::InvalidArgument(
            "integrated gradients needs at least one step".into(),
        ));
    }
    let delta: Vec<f64> = x
        .data()
        .iter()
        .zip(baseline.data())
        .map(|(a, b)| a - b)
        .collect();
    let grads: Vec<Vec<f64>> = (0..steps)
        .into_par_iter()
        .map(|t| {
            let alpha = (t as f64 + 0.5) / steps as f64;
            let point: Vec<f64> = baseline
                .data()
                .iter()
                .zip(&delta)
                .map(|(b, d)| b + alpha * d)
                .collect();
            let point = x.with_data(point)?;
            Ok(model.gradient(&point, class, counter)?.into_data())
        })
        .collect::<Result<_>>()?;
    let values = ordered_sum(grads, n)
        .into_iter()
        .zip(&delta)
        .map(|(g, d)| d * g / steps as f64)
        .collect();
    Ok(
        AttributionResult::new(Method::IntegratedGradients, class, values, 2 * steps as u64)
            .param("steps", steps),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_random_model, random_input};

    #[test]
    fn zero_input_gives_zero() {
        let model = generate_random_model(1, &"5-8-relu-1".parse().unwrap()).unwrap();
        let x = Tensor::zeros(vec![5]).unwrap();
        let r = gradient_x_input(&model, &x, 0, &EvalCounter::new()).unwrap();
        assert!(r.values.iter().all(|&v| v == 0.0));
        assert_eq!(r.eval_count, 2);
    }

    fn completeness_gap(seed: u64, steps: usize) -> f64 {
        let model = generate_random_model(seed, &"6-16-relu-1".parse().unwrap()).unwrap();
        let x = random_input(&[6], seed + 50);
        let b = Tensor::zeros(vec![6]).unwrap();
        let c = EvalCounter::new();
        let r = integrated_gradients(&model, &x, 0, steps, &b, &c).unwrap();
        assert_eq!(c.total(), 2 * steps as u64);
        let gap =
            model.forward(&x, &c).unwrap().data()[0] - model.forward(&b, &c).unwrap().data()[0];
        ((r.values.iter().sum::<f64>() - gap) / gap).abs()
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    // The gradient of a ReLU network is piecewise constant along the path, so
    // the midpoint rule converges at O(1/m) rather than O(1/m^2).
    #[test]
    fn ig_completeness_converges() {
        let coarse = median((0..20).map(|s| completeness_gap(s, 128)).collect());
        let fine = median((0..20).map(|s| completeness_gap(s, 8192)).collect());
        assert!(coarse < 1e-2, "median gap at m=128: {coarse}");
        assert!(fine < 1e-3, "median gap at m=8192: {fine}");
        assert!(fine < coarse / 10.0);
    }

    #[test]
    fn ig_self_convergence() {
        for seed in 0..5 {
            let model = generate_random_model(seed, &"6-16-relu-1".parse().unwrap()).unwrap();
            let x = random_input(&[6], seed + 9);
            let b = Tensor::zeros(vec![6]).unwrap();
            let c = EvalCounter::new();
            let r1 = integrated_gradients(&model, &x, 0, 8192, &b, &c).unwrap();
            let r2 = integrated_gradients(&model, &x, 0, 16384, &b, &c).unwrap();
            let norm = r2.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            let diff = r1
                .values
                .iter()
                .zip(&r2.values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(diff < 1e-3 * norm, "seed {seed}: {diff} vs {norm}");
        }
    }
}

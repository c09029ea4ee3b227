use rayon::prelude::*;

use super::{check_request, AttributionResult, Method};
use crate::error::{Error, Result};
use crate::harness::EvalCounter;
use crate::network::Model;
use crate::tensor::Tensor;

/// Largest feature count the exact oracle accepts (`2^25` forward passes).
pub const MAX_EXACT_FEATURES: usize = 25;

/// `ln(n!)`.
fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|v| (v as f64).ln()).sum()
}

/// Exact Shapley values by full subset enumeration.
///
/// Each of the `2^N` coalitions is evaluated once; feature `i` then collects
/// `|S|! (N-|S|-1)! / N! * (f(S ∪ {i}) - f(S))` over every `S` without `i`.
pub fn exact_shapley(
    model: &Model,
    x: &Tensor,
    class: usize,
    baseline: &Tensor,
    counter: &EvalCounter,
) -> Result<AttributionResult> {
    let n = check_request(model, x, class, baseline)?;
    if n > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures {
            n,
            max: MAX_EXACT_FEATURES,
        });
    }
    let subsets = 1usize << n;
    let (xv, bv) = (x.data(), baseline.data());

    let payoff: Vec<f64> = (0..subsets)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, mask| {
                for (j, slot) in buf.iter_mut().enumerate() {
                    *slot = if mask >> j & 1 == 1 { xv[j] } else { bv[j] };
                }
                model.evaluate(buf, counter)[class]
            },
        )
        .collect();

    let ln_n = ln_factorial(n);
    let weight: Vec<f64> = (0..n)
        .map(|s| (ln_factorial(s) + ln_factorial(n - s - 1) - ln_n).exp())
        .collect();

    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let bit = 1usize << i;
            (0..subsets)
                .filter(|mask| mask & bit == 0)
                .map(|mask| {
                    weight[mask.count_ones() as usize] * (payoff[mask | bit] - payoff[mask])
                })
                .sum()
        })
        .collect();

    Ok(AttributionResult::new(
        Method::ExactShapley,
        class,
        values,
        subsets as u64,
    ))
}

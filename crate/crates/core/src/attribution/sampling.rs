use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_request, ordered_sum, AttributionResult, Method};
use crate::error::{Error, Result};
use crate::harness::EvalCounter;
use crate::network::Model;
use crate::seed;
use crate::tensor::Tensor;

const CHUNK: usize = 64;

/// Monte-Carlo Shapley estimate from `permutations` random feature orderings.
///
/// Along each ordering, features are switched from baseline to their value
/// one at a time and each receives the resulting change in `f_c`. Every
/// ordering costs `N + 1` forward passes. Ordering `p` is drawn from its own
/// stream derived from `seed`, so the estimate is reproducible and
/// independent of scheduling.
pub fn shapley_sampling(
    model: &Model,
    x: &Tensor,
    class: usize,
    permutations: usize,
    seed: u64,
    baseline: &Tensor,
    counter: &EvalCounter,
) -> Result<AttributionResult> {
    let n = check_request(model, x, class, baseline)?;
    if permutations == 0 {
        return Err(Error::InvalidArgument(
            "need at least one permutation".into(),
        ));
    }
    let (xv, bv) = (x.data(), baseline.data());
    let chunks = permutations.div_ceil(CHUNK);

    let partial: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut sums = vec![0.0; n];
            let mut order: Vec<usize> = (0..n).collect();
            let mut point = vec![0.0; n];
            let end = ((chunk + 1) * CHUNK).min(permutations);
            for p in chunk * CHUNK..end {
                let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[p as u64]));
                order.sort_unstable();
                order.shuffle(&mut rng);
                point.copy_from_slice(bv);
                let mut prev = model.evaluate(&point, counter)[class];
                for &f in &order {
                    point[f] = xv[f];
                    let next = model.evaluate(&point, counter)[class];
                    sums[f] += next - prev;
                    prev = next;
                }
            }
            sums
        })
        .collect();

    let values = ordered_sum(partial, n)
        .into_iter()
        .map(|s| s / permutations as f64)
        .collect();
    let mut result = AttributionResult::new(
        Method::ShapleySampling,
        class,
        values,
        (permutations * (n + 1)) as u64,
    )
    .param("M", permutations);
    result.seed = Some(seed);
    Ok(result)
}

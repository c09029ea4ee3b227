use rayon::prelude::*;

use super::{check_request, AttributionResult, Method};
use crate::coalition::{pick_coalition_sizes, FirstLayerProjector, ScalingMode, SizeSchedule};
use crate::error::Result;
use crate::harness::EvalCounter;
use crate::network::Model;
use crate::probnet::{filter_from, Moments};
use crate::tensor::Tensor;

/// Deep approximate Shapley propagation over `k` evenly spaced coalition
/// sizes. See [`dasp_with_schedule`].
pub fn dasp(
    model: &Model,
    x: &Tensor,
    class: usize,
    k: usize,
    baseline: &Tensor,
    scaling: ScalingMode,
    counter: &EvalCounter,
) -> Result<AttributionResult> {
    let schedule = pick_coalition_sizes(model.num_features(), k)?;
    dasp_with_schedule(model, x, class, &schedule, baseline, scaling, counter)
}

/// Deep approximate Shapley propagation.
///
/// For every feature `i` and coalition size `k`, the first linear layer's
/// pre-activations under a random size-`k` coalition of the other features
/// are summarized as independent Gaussians, with and without `i`. Both are
/// filtered through the rest of the network by moment matching; the
/// difference of the output means is the expected marginal contribution of
/// `i` at size `k`. Averaging over the schedule gives the estimate.
///
/// The two propagations for one `(i, k)` run as a single paired
/// mean-and-variance pass and cost two forward-equivalents, for a total of
/// `2 K N`.
pub fn dasp_with_schedule(
    model: &Model,
    x: &Tensor,
    class: usize,
    schedule: &SizeSchedule,
    baseline: &Tensor,
    scaling: ScalingMode,
    counter: &EvalCounter,
) -> Result<AttributionResult> {
    let n = check_request(model, x, class, baseline)?;
    let schedule = SizeSchedule::new(schedule.sizes().to_vec(), n)?;
    let projector = FirstLayerProjector::new(model, x, baseline)?;
    let tail = projector.tail_start();
    let sizes = schedule.sizes();
    let kf = sizes.len() as f64;

    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let column = projector.column(i);
            let mut acc = 0.0;
            for &k in sizes {
                let (mu, var, mu_with) = projector.stats_with_column(i, k, &column, scaling);
                counter.add(2);
                let without = filter_from(
                    model,
                    tail,
                    Moments {
                        mean: mu,
                        variance: var.clone(),
                    },
                );
                let with = filter_from(
                    model,
                    tail,
                    Moments {
                        mean: mu_with,
                        variance: var,
                    },
                );
                acc += (with.mean[class] - without.mean[class]) / kf;
            }
            acc
        })
        .collect();

    Ok(
        AttributionResult::new(Method::Dasp, class, values, 2 * (sizes.len() * n) as u64)
            .param("K", sizes.len())
            .param("sizes", sizes.to_vec())
            .param("scaling", scaling.as_str()),
    )
}

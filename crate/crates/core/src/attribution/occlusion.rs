use rayon::prelude::*;

use super::{check_request, AttributionResult, Method};
use crate::error::Result;
use crate::harness::EvalCounter;
use crate::network::Model;
use crate::tensor::Tensor;

/// `R_i = f_c(x) - f_c(x with feature i at the baseline)`. Costs `N + 1`.
pub fn occlusion(
    model: &Model,
    x: &Tensor,
    class: usize,
    baseline: &Tensor,
    counter: &EvalCounter,
) -> Result<AttributionResult> {
    let n = check_request(model, x, class, baseline)?;
    let full = model.evaluate(x.data(), counter)[class];
    let values = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut point = x.data().to_vec();
            point[i] = baseline.data()[i];
            full - model.evaluate(&point, counter)[class]
        })
        .collect();
    Ok(AttributionResult::new(
        Method::Occlusion,
        class,
        values,
        (n + 1) as u64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Layer;

    #[test]
    fn max_model_is_biased() {
        let model = Model::new(
            vec![2, 1],
            vec![Layer::MaxPool { window: vec![2] }, Layer::Flatten],
        )
        .unwrap();
        let x = Tensor::new(vec![2, 1], vec![1.0, 3.0]).unwrap();
        let b = Tensor::zeros(vec![2, 1]).unwrap();
        let c = EvalCounter::new();
        let r = occlusion(&model, &x, 0, &b, &c).unwrap();
        assert_eq!(r.values, vec![0.0, 2.0]);
        assert_eq!(r.eval_count, 3);
        assert_eq!(c.total(), 3);
    }

    #[test]
    fn single_feature_is_complete() {
        let model = Model::new(
            vec![1],
            vec![
                Layer::Dense {
                    weights: Tensor::new(vec![1, 1], vec![-2.0]).unwrap(),
                    bias: Tensor::vector(vec![0.5]).unwrap(),
                },
                Layer::Relu,
            ],
        )
        .unwrap();
        let x = Tensor::vector(vec![-1.0]).unwrap();
        let b = Tensor::vector(vec![0.25]).unwrap();
        let r = occlusion(&model, &x, 0, &b, &EvalCounter::new()).unwrap();
        // f(x) = relu(2.5) = 2.5, f(b) = relu(0) = 0.
        assert_eq!(r.values, vec![2.5]);
    }
}

//! Attribution methods behind one result type.
//!
//! Every method explains one output unit `f_c` of a [`Model`] at an input `x`
//! and reports its cost in forward-equivalents. Methods that remove features
//! replace them with a constant baseline (zeros by default).
//!
//! All parallel loops reduce in a fixed order, so results do not depend on
//! the number of worker threads.

mod dasp;
mod exact;
mod gradient;
mod occlusion;
mod sampling;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::network::Model;
use crate::tensor::Tensor;

pub use dasp::{dasp, dasp_with_schedule};
pub use exact::{exact_shapley, MAX_EXACT_FEATURES};
pub use gradient::{gradient_x_input, integrated_gradients};
pub use occlusion::occlusion;
pub use sampling::shapley_sampling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactShapley,
    ShapleySampling,
    Occlusion,
    GradientXInput,
    IntegratedGradients,
    Dasp,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::ExactShapley,
        Method::ShapleySampling,
        Method::Occlusion,
        Method::GradientXInput,
        Method::IntegratedGradients,
        Method::Dasp,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ExactShapley => "exact_shapley",
            Method::ShapleySampling => "shapley_sampling",
            Method::Occlusion => "occlusion",
            Method::GradientXInput => "gradient_x_input",
            Method::IntegratedGradients => "integrated_gradients",
            Method::Dasp => "dasp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "exact_shapley" | "exact" => Method::ExactShapley,
            "shapley_sampling" | "sampling" => Method::ShapleySampling,
            "occlusion" => Method::Occlusion,
            "gradient_x_input" | "gradxinput" | "grad_x_input" => Method::GradientXInput,
            "integrated_gradients" | "ig" => Method::IntegratedGradients,
            "dasp" => Method::Dasp,
            other => {
                return Err(Error::InvalidArgument(format!("unknown method `{other}`")));
            }
        })
    }
}

/// Per-feature relevance for one output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub method: Method,
    #[serde(rename = "class")]
    pub class_index: usize,
    pub values: Vec<f64>,
    /// Forward-equivalents spent.
    pub eval_count: u64,
    pub seed: Option<u64>,
    pub params: BTreeMap<String, Value>,
}

impl AttributionResult {
    fn new(method: Method, class_index: usize, values: Vec<f64>, eval_count: u64) -> Self {
        AttributionResult {
            method,
            class_index,
            values,
            eval_count,
            seed: None,
            params: BTreeMap::new(),
        }
    }

    fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("attribution serializes")
    }
}

/// Value used for features that are absent from a coalition.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Baseline {
    #[default]
    Zero,
    Constant(f64),
    Values(Tensor),
}

impl Baseline {
    /// The baseline as an input-shaped tensor for `model`.
    pub fn materialize(&self, model: &Model) -> Result<Tensor> {
        let shape = model.input_shape().to_vec();
        let n = model.num_features();
        match self {
            Baseline::Zero => Tensor::zeros(shape),
            Baseline::Constant(v) => Tensor::new(shape, vec![*v; n]),
            Baseline::Values(t) => {
                if t.len() != n {
                    return Err(Error::shape(format!(
                        "baseline has {} values, model has {n} features",
                        t.len()
                    )));
                }
                Tensor::new(shape, t.data().to_vec())
            }
        }
    }
}

/// Shared argument checks. Returns the number of features.
fn check_request(model: &Model, x: &Tensor, class: usize, baseline: &Tensor) -> Result<usize> {
    model.check_input(x)?;
    model.check_input(baseline)?;
    model.check_class(class)?;
    Ok(model.num_features())
}

/// Sums row vectors in index order.
fn ordered_sum(parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    parts.into_iter().fold(vec![0.0; len], |mut acc, part| {
        for (a, p) in acc.iter_mut().zip(part) {
            *a += p;
        }
        acc
    })
}

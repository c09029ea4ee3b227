//! Moment-matching twin of a [`Model`]: every activation is an independent
//! Gaussian described by a mean and a variance, and each layer maps input
//! moments to output moments.
//!
//! Linear layers are exact (`W μ + b`, `W² σ²`). ReLU uses the rectified
//! Gaussian moments. Max pooling reduces each window left to right in
//! row-major order with the pairwise Gaussian max approximation; that
//! approximation is not associative, so the order is part of the contract.

use crate::error::{Error, Result};
use crate::harness::EvalCounter;
use crate::math::{max_pair_moments, relu_gaussian_moments, MomentPair};
use crate::network::ops::{apply_linear, pool_windows, LinearMode};
use crate::network::{Layer, Model};
use crate::tensor::Tensor;

/// Independent per-unit Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianActivation {
    mean: Tensor,
    variance: Tensor,
}

impl GaussianActivation {
    pub fn new(mean: Tensor, variance: Tensor) -> Result<Self> {
        if mean.shape() != variance.shape() {
            return Err(Error::shape(format!(
                "mean shape {:?} differs from variance shape {:?}",
                mean.shape(),
                variance.shape()
            )));
        }
        if variance.data().iter().any(|&v| v < 0.0 || v.is_nan()) {
            return Err(Error::InvalidArgument(
                "variances must be non-negative".into(),
            ));
        }
        Ok(GaussianActivation { mean, variance })
    }

    /// Point masses at `x`.
    pub fn deterministic(x: Tensor) -> Self {
        let variance = x.with_data(vec![0.0; x.len()]).expect("same shape");
        GaussianActivation { mean: x, variance }
    }

    pub fn mean(&self) -> &Tensor {
        &self.mean
    }

    pub fn variance(&self) -> &Tensor {
        &self.variance
    }

    pub fn unit(&self, index: usize) -> MomentPair {
        MomentPair::new(self.mean.data()[index], self.variance.data()[index])
    }

    fn from_parts(shape: &[usize], mean: Vec<f64>, variance: Vec<f64>) -> Self {
        GaussianActivation {
            mean: Tensor::new(shape.to_vec(), mean).expect("kernel output matches shape"),
            variance: Tensor::new(shape.to_vec(), variance).expect("kernel output matches shape"),
        }
    }
}

/// Flat mean/variance buffers used on the hot path.
#[derive(Debug, Clone)]
pub(crate) struct Moments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

fn check_layer_input(model_shape: &[usize], g: &GaussianActivation) -> Result<()> {
    if g.mean.shape() != model_shape {
        return Err(Error::shape(format!(
            "activation shape {:?} does not match layer input {model_shape:?}",
            g.mean.shape()
        )));
    }
    Ok(())
}

/// Exact moments through a linear layer (dense, conv, average pooling,
/// global average pooling, flatten).
pub fn propagate_linear(layer: &Layer, g: &GaussianActivation) -> Result<GaussianActivation> {
    if !layer.is_linear() {
        return Err(Error::InvalidArgument(format!(
            "{} is not a linear layer",
            layer.kind()
        )));
    }
    let in_shape = g.mean.shape();
    let out_shape = layer.output_shape(in_shape)?;
    let m = linear_moments(layer, in_shape, g.mean.data(), g.variance.data());
    Ok(GaussianActivation::from_parts(
        &out_shape, m.mean, m.variance,
    ))
}

fn linear_moments(layer: &Layer, in_shape: &[usize], mean: &[f64], variance: &[f64]) -> Moments {
    Moments {
        mean: apply_linear(layer, in_shape, mean, LinearMode::Affine),
        variance: apply_linear(layer, in_shape, variance, LinearMode::SquaredWeights),
    }
}

/// Rectified Gaussian moments, unit by unit.
pub fn propagate_relu(g: &GaussianActivation) -> GaussianActivation {
    let m = relu_moments(g.mean.data(), g.variance.data());
    GaussianActivation::from_parts(g.mean.shape(), m.mean, m.variance)
}

fn relu_moments(mean: &[f64], variance: &[f64]) -> Moments {
    let (mean, variance) = mean
        .iter()
        .zip(variance)
        .map(|(&m, &v)| {
            let out = relu_gaussian_moments(MomentPair::new(m, v));
            (out.mean, out.variance)
        })
        .unzip();
    Moments { mean, variance }
}

/// Max pooling via a left-to-right pairwise reduction of each window.
pub fn propagate_max(layer: &Layer, g: &GaussianActivation) -> Result<GaussianActivation> {
    let Layer::MaxPool { window } = layer else {
        return Err(Error::InvalidArgument(format!(
            "expected a maxpool layer, got {}",
            layer.kind()
        )));
    };
    let in_shape = g.mean.shape();
    let out_shape = layer.output_shape(in_shape)?;
    let m = max_moments(in_shape, window, g.mean.data(), g.variance.data());
    Ok(GaussianActivation::from_parts(
        &out_shape, m.mean, m.variance,
    ))
}

fn max_moments(in_shape: &[usize], window: &[usize], mean: &[f64], variance: &[f64]) -> Moments {
    let (mean, variance) = pool_windows(in_shape, window)
        .map(|idx| {
            let unit = |i: usize| MomentPair::new(mean[i], variance[i]);
            let out = idx[1..]
                .iter()
                .fold(unit(idx[0]), |acc, &i| max_pair_moments(acc, unit(i)));
            (out.mean, out.variance)
        })
        .unzip();
    Moments { mean, variance }
}

pub(crate) fn propagate_layer(layer: &Layer, in_shape: &[usize], m: &Moments) -> Moments {
    match layer {
        Layer::Relu => relu_moments(&m.mean, &m.variance),
        Layer::MaxPool { window } => max_moments(in_shape, window, &m.mean, &m.variance),
        _ => linear_moments(layer, in_shape, &m.mean, &m.variance),
    }
}

/// Filters moments through layers `start..` without counting.
pub(crate) fn filter_from(model: &Model, start: usize, mut m: Moments) -> Moments {
    for (idx, layer) in model.layers().iter().enumerate().skip(start) {
        m = propagate_layer(layer, model.shape_at(idx), &m);
    }
    m
}

/// Propagates `g` from layer `start_index` to the output and returns the
/// moments of output unit `class`. Counts two forward-equivalents.
pub fn propagate_tail(
    model: &Model,
    start_index: usize,
    g: &GaussianActivation,
    class: usize,
    counter: &EvalCounter,
) -> Result<MomentPair> {
    if start_index > model.layers().len() {
        return Err(Error::InvalidArgument(format!(
            "start index {start_index} past the last layer"
        )));
    }
    check_layer_input(model.shape_at(start_index), g)?;
    model.check_class(class)?;
    counter.add(2);
    let out = filter_from(
        model,
        start_index,
        Moments {
            mean: g.mean.data().to_vec(),
            variance: g.variance.data().to_vec(),
        },
    );
    Ok(MomentPair::new(out.mean[class], out.variance[class]))
}

/// Propagates `g` through the whole model.
pub fn propagate_model(model: &Model, g: &GaussianActivation) -> Result<GaussianActivation> {
    check_layer_input(model.input_shape(), g)?;
    let out = filter_from(
        model,
        0,
        Moments {
            mean: g.mean.data().to_vec(),
            variance: g.variance.data().to_vec(),
        },
    );
    Ok(GaussianActivation::from_parts(
        model.shape_at(model.layers().len()),
        out.mean,
        out.variance,
    ))
}

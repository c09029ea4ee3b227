//! Deterministic miniature inference engine.
//!
//! Activations use channels-last layout: a 1-D signal is `[length, channels]`
//! and an image is `[height, width, channels]`. Dense layers read rank-1
//! inputs; use `flatten` in between. Convolutions use stride 1 and valid
//! padding. Pooling windows are non-overlapping and must divide the spatial
//! extents.

mod generate;
mod io;
pub(crate) mod ops;

pub use generate::{generate_random_model, random_input, Arch};
pub use io::load_model;

use crate::error::{Error, Result};
use crate::harness::EvalCounter;
use crate::tensor::Tensor;

/// One layer of a feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `weights` is `[out, in]`, `bias` is `[out]`.
    Dense {
        weights: Tensor,
        bias: Tensor,
    },
    /// `kernel` is `[kw, cin, cout]`, `bias` is `[cout]`.
    Conv1d {
        kernel: Tensor,
        bias: Tensor,
    },
    /// `kernel` is `[kh, kw, cin, cout]`, `bias` is `[cout]`.
    Conv2d {
        kernel: Tensor,
        bias: Tensor,
    },
    Relu,
    MaxPool {
        window: Vec<usize>,
    },
    AvgPool {
        window: Vec<usize>,
    },
    GlobalAvgPool,
    Flatten,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv1d { .. } => "conv1d",
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool { .. } => "maxpool",
            Layer::AvgPool { .. } => "avgpool",
            Layer::GlobalAvgPool => "globalavgpool",
            Layer::Flatten => "flatten",
        }
    }

    pub fn is_parametric(&self) -> bool {
        matches!(
            self,
            Layer::Dense { .. } | Layer::Conv1d { .. } | Layer::Conv2d { .. }
        )
    }

    /// True for layers that are affine maps of their input.
    pub fn is_linear(&self) -> bool {
        !matches!(self, Layer::Relu | Layer::MaxPool { .. })
    }

    /// Shape produced by this layer for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense { weights, bias } => {
                let ws = weights.shape();
                if ws.len() != 2 {
                    return Err(Error::shape(format!(
                        "dense weights must be [out, in], got {ws:?}"
                    )));
                }
                if bias.shape() != [ws[0]] {
                    return Err(Error::shape(format!(
                        "dense bias has shape {:?} but weights have {} output rows",
                        bias.shape(),
                        ws[0]
                    )));
                }
                if input != [ws[1]] {
                    return Err(Error::shape(format!(
                        "dense layer expects input [{}], got {input:?}",
                        ws[1]
                    )));
                }
                Ok(vec![ws[0]])
            }
            Layer::Conv1d { kernel, bias } => {
                let ks = kernel.shape();
                if ks.len() != 3 {
                    return Err(Error::shape(format!(
                        "conv1d kernel must be [kw, cin, cout], got {ks:?}"
                    )));
                }
                conv_output(input, 1, &[1, ks[0], ks[1], ks[2]], bias)
            }
            Layer::Conv2d { kernel, bias } => {
                let ks = kernel.shape();
                if ks.len() != 4 {
                    return Err(Error::shape(format!(
                        "conv2d kernel must be [kh, kw, cin, cout], got {ks:?}"
                    )));
                }
                conv_output(input, 2, ks, bias)
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::MaxPool { window } | Layer::AvgPool { window } => {
                pool_output(self.kind(), input, window)
            }
            Layer::GlobalAvgPool => {
                if input.len() < 2 {
                    return Err(Error::shape(format!(
                        "globalavgpool needs a spatial input, got {input:?}"
                    )));
                }
                Ok(vec![input[input.len() - 1]])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

fn conv_output(
    input: &[usize],
    spatial_rank: usize,
    kernel: &[usize],
    bias: &Tensor,
) -> Result<Vec<usize>> {
    let name = if spatial_rank == 1 {
        "conv1d"
    } else {
        "conv2d"
    };
    if input.len() != spatial_rank + 1 {
        return Err(Error::shape(format!(
            "{name} expects a rank-{} channels-last input, got {input:?}",
            spatial_rank + 1
        )));
    }
    let (kh, kw, cin, cout) = (kernel[0], kernel[1], kernel[2], kernel[3]);
    let (h, w, c) = spatial_view(input);
    if c != cin {
        return Err(Error::shape(format!(
            "{name} kernel expects {cin} input channels, input has {c}"
        )));
    }
    if bias.shape() != [cout] {
        return Err(Error::shape(format!(
            "{name} bias has shape {:?}, expected [{cout}]",
            bias.shape()
        )));
    }
    if kh > h || kw > w {
        return Err(Error::shape(format!(
            "{name} kernel larger than input {input:?}"
        )));
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    Ok(if spatial_rank == 1 {
        vec![ow, cout]
    } else {
        vec![oh, ow, cout]
    })
}

fn pool_output(kind: &str, input: &[usize], window: &[usize]) -> Result<Vec<usize>> {
    if window.is_empty() || window.contains(&0) {
        return Err(Error::shape(format!(
            "{kind} window must be positive, got {window:?}"
        )));
    }
    if input.len() != window.len() + 1 {
        return Err(Error::shape(format!(
            "{kind} window {window:?} does not fit input {input:?}"
        )));
    }
    let mut out = Vec::with_capacity(input.len());
    for (&extent, &win) in input.iter().zip(window) {
        if extent % win != 0 {
            return Err(Error::shape(format!(
                "{kind} window {window:?} does not divide input {input:?}"
            )));
        }
        out.push(extent / win);
    }
    out.push(input[input.len() - 1]);
    Ok(out)
}

/// Views a rank-2 `[w, c]` or rank-3 `[h, w, c]` shape as `(h, w, c)`.
pub(crate) fn spatial_view(shape: &[usize]) -> (usize, usize, usize) {
    match *shape {
        [w, c] => (1, w, c),
        [h, w, c] => (h, w, c),
        _ => unreachable!("shape {shape:?} validated as spatial"),
    }
}

/// A shape-validated feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    // shapes[i] is the input shape of layer i; the last entry is the output.
    shapes: Vec<Vec<usize>>,
}

impl Model {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::shape(format!("invalid input shape {input_shape:?}")));
        }
        if layers.is_empty() {
            return Err(Error::shape("a model needs at least one layer"));
        }
        let mut shapes = vec![input_shape.clone()];
        for (idx, layer) in layers.iter().enumerate() {
            let next = layer
                .output_shape(&shapes[idx])
                .map_err(|e| Error::shape(format!("layer {idx} ({}): {e}", layer.kind())))?;
            shapes.push(next);
        }
        let out = shapes.last().expect("non-empty");
        if out.len() != 1 {
            return Err(Error::shape(format!(
                "model must end in a vector, ends in {out:?}"
            )));
        }
        Ok(Model {
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Number of input features `N`.
    pub fn num_features(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Number of outputs `C`.
    pub fn output_dim(&self) -> usize {
        self.shapes.last().expect("non-empty")[0]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Activation shape entering layer `index`; `index == layers().len()`
    /// gives the output shape.
    pub fn shape_at(&self, index: usize) -> &[usize] {
        &self.shapes[index]
    }

    /// Index of the first dense or convolutional layer, provided only
    /// reshapes precede it.
    pub fn first_linear_layer(&self) -> Result<usize> {
        for (idx, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Flatten => continue,
                l if l.is_parametric() => return Ok(idx),
                l => {
                    return Err(Error::UnsupportedModel(format!(
                        "the first layer must be dense or convolutional, found {}",
                        l.kind()
                    )))
                }
            }
        }
        Err(Error::UnsupportedModel(
            "model has no dense or convolutional layer".into(),
        ))
    }

    pub(crate) fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() && x.shape() != [self.num_features()] {
            return Err(Error::shape(format!(
                "input has shape {:?}, model expects {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    pub(crate) fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.output_dim() {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for {} outputs",
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// `f(x)`. Counts one forward-equivalent.
    pub fn forward(&self, x: &Tensor, counter: &EvalCounter) -> Result<Tensor> {
        self.check_input(x)?;
        Tensor::vector(self.evaluate(x.data(), counter))
    }

    /// Unchecked forward pass over flat input data. Counts one
    /// forward-equivalent.
    pub(crate) fn evaluate(&self, x: &[f64], counter: &EvalCounter) -> Vec<f64> {
        counter.add(1);
        self.evaluate_range(0, x.to_vec())
    }

    /// Runs layers `start..` on an activation entering layer `start`.
    pub(crate) fn evaluate_range(&self, start: usize, mut act: Vec<f64>) -> Vec<f64> {
        for (idx, layer) in self.layers.iter().enumerate().skip(start) {
            act = ops::forward_layer(layer, &self.shapes[idx], &act);
        }
        act
    }

    /// `∂f_c/∂x` by reverse accumulation. Counts two forward-equivalents
    /// (one forward, one backward).
    ///
    /// ReLU passes no gradient at exactly zero; max-pool ties route the
    /// gradient to the lowest flat index in the window.
    pub fn gradient(&self, x: &Tensor, class: usize, counter: &EvalCounter) -> Result<Tensor> {
        self.check_input(x)?;
        self.check_class(class)?;
        counter.add(2);
        let grad = ops::input_gradient(self, x.data(), class);
        Tensor::new(x.shape().to_vec(), grad)
    }
}

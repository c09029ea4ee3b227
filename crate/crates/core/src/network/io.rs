//! JSON model files.
//!
//! ```json
//! {"input_shape": [2],
//!  "layers": [{"kind": "dense", "weights": [[1.0, 2.0]], "bias": [0.0]},
//!             {"kind": "relu"}]}
//! ```
//!
//! Dense weights nest as `[out][in]`, conv1d kernels as `[kw][cin][cout]` and
//! conv2d kernels as `[kh][kw][cin][cout]`. Unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{Layer, Model};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    input_shape: Vec<usize>,
    layers: Vec<RawLayer>,
    #[serde(default)]
    output_dim: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    kind: String,
    #[serde(default)]
    weights: Option<Value>,
    #[serde(default)]
    bias: Option<Vec<f64>>,
    #[serde(default)]
    window: Option<Vec<usize>>,
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Model::from_json(&text)
}

impl Model {
    pub fn from_json(text: &str) -> Result<Model> {
        let raw: RawModel = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let layers = raw
            .layers
            .into_iter()
            .enumerate()
            .map(|(idx, l)| {
                build_layer(l).map_err(|e| match e {
                    Error::Parse(msg) => Error::Parse(format!("layer {idx}: {msg}")),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = Model::new(raw.input_shape, layers)?;
        if let Some(declared) = raw.output_dim {
            if declared != model.output_dim() {
                return Err(Error::shape(format!(
                    "declared output_dim {declared} but layers produce {}",
                    model.output_dim()
                )));
            }
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        let layers: Vec<Value> = self.layers().iter().map(layer_json).collect();
        let doc = json!({
            "input_shape": self.input_shape(),
            "output_dim": self.output_dim(),
            "layers": layers,
        });
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

fn build_layer(raw: RawLayer) -> Result<Layer> {
    let kind = raw.kind.as_str();
    let parametric = matches!(kind, "dense" | "conv1d" | "conv2d");
    let pooling = matches!(kind, "maxpool" | "avgpool");
    if !parametric && !pooling && !matches!(kind, "relu" | "globalavgpool" | "flatten") {
        return Err(Error::UnsupportedLayer(raw.kind));
    }
    if !parametric && (raw.weights.is_some() || raw.bias.is_some()) {
        return Err(Error::Parse(format!(
            "{kind} layers take no weights or bias"
        )));
    }
    if !pooling && raw.window.is_some() {
        return Err(Error::Parse(format!("{kind} layers take no window")));
    }

    if parametric {
        let weights = raw
            .weights
            .ok_or_else(|| Error::Parse(format!("{kind} layer is missing `weights`")))?;
        let bias = raw
            .bias
            .ok_or_else(|| Error::Parse(format!("{kind} layer is missing `bias`")))?;
        let weights = nested_to_tensor(&weights)?;
        let bias = Tensor::vector(bias)?;
        return Ok(match kind {
            "dense" => Layer::Dense { weights, bias },
            "conv1d" => Layer::Conv1d {
                kernel: weights,
                bias,
            },
            _ => Layer::Conv2d {
                kernel: weights,
                bias,
            },
        });
    }
    if pooling {
        let window = raw
            .window
            .ok_or_else(|| Error::Parse(format!("{kind} layer is missing `window`")))?;
        return Ok(if kind == "maxpool" {
            Layer::MaxPool { window }
        } else {
            Layer::AvgPool { window }
        });
    }
    Ok(match kind {
        "relu" => Layer::Relu,
        "globalavgpool" => Layer::GlobalAvgPool,
        _ => Layer::Flatten,
    })
}

/// Converts a rectangular nested JSON array of numbers into a tensor.
fn nested_to_tensor(value: &Value) -> Result<Tensor> {
    fn walk(v: &Value, depth: usize, shape: &mut Vec<usize>, out: &mut Vec<f64>) -> Result<()> {
        match v {
            Value::Number(n) => {
                if depth != shape.len() {
                    return Err(Error::Parse("ragged weight array".into()));
                }
                out.push(
                    n.as_f64()
                        .ok_or_else(|| Error::Parse(format!("bad number {n}")))?,
                );
                Ok(())
            }
            Value::Array(items) => {
                if items.is_empty() {
                    return Err(Error::Parse("empty weight array".into()));
                }
                if depth == shape.len() {
                    if !out.is_empty() {
                        return Err(Error::Parse("ragged weight array".into()));
                    }
                    shape.push(items.len());
                } else if shape[depth] != items.len() {
                    return Err(Error::Parse("ragged weight array".into()));
                }
                items
                    .iter()
                    .try_for_each(|item| walk(item, depth + 1, shape, out))
            }
            other => Err(Error::Parse(format!(
                "expected a number or array, got {other}"
            ))),
        }
    }

    let mut shape = Vec::new();
    let mut data = Vec::new();
    walk(value, 0, &mut shape, &mut data)?;
    if shape.is_empty() {
        return Err(Error::Parse("weights must be an array".into()));
    }
    Tensor::new(shape, data)
}

fn tensor_to_nested(t: &Tensor) -> Value {
    fn build(shape: &[usize], data: &[f64]) -> Value {
        if shape.len() == 1 {
            return Value::from(data.to_vec());
        }
        let stride: usize = shape[1..].iter().product();
        Value::Array(
            data.chunks(stride)
                .map(|chunk| build(&shape[1..], chunk))
                .collect(),
        )
    }
    build(t.shape(), t.data())
}

fn layer_json(layer: &Layer) -> Value {
    match layer {
        Layer::Dense { weights, bias }
        | Layer::Conv1d {
            kernel: weights,
            bias,
        }
        | Layer::Conv2d {
            kernel: weights,
            bias,
        } => json!({
            "kind": layer.kind(),
            "weights": tensor_to_nested(weights),
            "bias": bias.data(),
        }),
        Layer::MaxPool { window } | Layer::AvgPool { window } => {
            json!({"kind": layer.kind(), "window": window})
        }
        _ => json!({"kind": layer.kind()}),
    }
}

//! Random models and inputs for tests and benchmarks.
//!
//! Architectures are `-`-separated token strings. The first token is the
//! input shape (`18`, `32x4` for `[length, channels]`, `8x8x1` for
//! `[height, width, channels]`); the rest are layers:
//!
//! | token      | layer                                   |
//! |------------|-----------------------------------------|
//! | `32`       | dense with 32 outputs                   |
//! | `relu`     | ReLU                                    |
//! | `c3x4`     | conv1d, kernel width 3, 4 filters       |
//! | `c3x3x4`   | conv2d, 3×3 kernel, 4 filters           |
//! | `mp2`      | 1-D max pool (`mp2x2` for 2-D)          |
//! | `ap2`      | 1-D average pool (`ap2x2` for 2-D)      |
//! | `gap`      | global average pool                     |
//! | `flatten`  | flatten                                 |
//!
//! `18-32-relu-32-relu-1` is a two-hidden-layer MLP.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Layer, Model};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const BIAS_VARIANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Dense(usize),
    Relu,
    Conv(Vec<usize>, usize),
    MaxPool(Vec<usize>),
    AvgPool(Vec<usize>),
    GlobalAvgPool,
    Flatten,
}

/// A parsed architecture descriptor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arch {
    input_shape: Vec<usize>,
    tokens: Vec<Token>,
}

fn dims(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|d| {
            d.parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} `{s}`")))
        })
        .collect()
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split('-');
        let first = parts.next().unwrap_or_default();
        let input_shape = dims(first, "input shape")?;
        if input_shape.contains(&0) {
            return Err(Error::shape(format!("zero-width input in `{s}`")));
        }
        let mut tokens = Vec::new();
        for part in parts {
            let tok = match part {
                "relu" => Token::Relu,
                "gap" => Token::GlobalAvgPool,
                "flatten" => Token::Flatten,
                p if p.starts_with("mp") => Token::MaxPool(dims(&p[2..], "pool window")?),
                p if p.starts_with("ap") => Token::AvgPool(dims(&p[2..], "pool window")?),
                p if p.starts_with('c') => {
                    let mut d = dims(&p[1..], "conv spec")?;
                    if !(2..=3).contains(&d.len()) {
                        return Err(Error::InvalidArgument(format!("bad conv spec `{p}`")));
                    }
                    let filters = d.pop().expect("len checked");
                    Token::Conv(d, filters)
                }
                p => Token::Dense(
                    p.parse()
                        .map_err(|_| Error::InvalidArgument(format!("unknown arch token `{p}`")))?,
                ),
            };
            let zero = match &tok {
                Token::Dense(n) => *n == 0,
                Token::Conv(k, f) => *f == 0 || k.contains(&0),
                _ => false,
            };
            if zero {
                return Err(Error::shape(format!("zero-width layer `{part}` in `{s}`")));
            }
            tokens.push(tok);
        }
        Ok(Arch {
            input_shape,
            tokens,
        })
    }
}

/// Builds a model with He-style weights `N(0, 2/fan_in)` and biases
/// `N(0, 0.1)` (variances). Deterministic in `seed`.
pub fn generate_random_model(seed: u64, arch: &Arch) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bias_dist = Normal::new(0.0, BIAS_VARIANCE.sqrt()).expect("valid");
    let mut shape = arch.input_shape.clone();
    let mut layers = Vec::with_capacity(arch.tokens.len());
    for tok in &arch.tokens {
        let layer = match tok {
            Token::Dense(out) => {
                if shape.len() != 1 {
                    return Err(Error::shape(format!(
                        "dense layer after non-vector shape {shape:?}; add `flatten`"
                    )));
                }
                let fan_in = shape[0];
                let w = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid");
                Layer::Dense {
                    weights: Tensor::new(
                        vec![*out, fan_in],
                        (0..out * fan_in).map(|_| w.sample(&mut rng)).collect(),
                    )?,
                    bias: Tensor::vector((0..*out).map(|_| bias_dist.sample(&mut rng)).collect())?,
                }
            }
            Token::Conv(k, filters) => {
                let cin = *shape.last().expect("non-empty");
                let fan_in = k.iter().product::<usize>() * cin;
                let w = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid");
                let mut kshape = k.clone();
                kshape.extend([cin, *filters]);
                let kernel = Tensor::new(
                    kshape,
                    (0..fan_in * filters).map(|_| w.sample(&mut rng)).collect(),
                )?;
                let bias =
                    Tensor::vector((0..*filters).map(|_| bias_dist.sample(&mut rng)).collect())?;
                if k.len() == 1 {
                    Layer::Conv1d { kernel, bias }
                } else {
                    Layer::Conv2d { kernel, bias }
                }
            }
            Token::Relu => Layer::Relu,
            Token::MaxPool(w) => Layer::MaxPool { window: w.clone() },
            Token::AvgPool(w) => Layer::AvgPool { window: w.clone() },
            Token::GlobalAvgPool => Layer::GlobalAvgPool,
            Token::Flatten => Layer::Flatten,
        };
        shape = layer.output_shape(&shape)?;
        layers.push(layer);
    }
    Model::new(arch.input_shape.clone(), layers)
}

/// An input with i.i.d. standard normal features.
pub fn random_input(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let dist = Normal::new(0.0, 1.0).expect("valid");
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| dist.sample(&mut rng)).collect(),
    )
    .expect("shape matches")
}

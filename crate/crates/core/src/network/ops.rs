//! Layer kernels over flat row-major buffers.

use super::{spatial_view, Layer, Model};

/// How a linear layer is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LinearMode {
    /// `W x + b`.
    Affine,
    /// `W x`.
    Linear,
    /// `W² x` with elementwise-squared coefficients, no bias. Maps a vector of
    /// independent variances to the output variances.
    SquaredWeights,
}

pub(crate) fn forward_layer(layer: &Layer, in_shape: &[usize], input: &[f64]) -> Vec<f64> {
    match layer {
        Layer::Relu => input.iter().map(|&v| v.max(0.0)).collect(),
        Layer::MaxPool { window } => maxpool(in_shape, window, input).0,
        _ => apply_linear(layer, in_shape, input, LinearMode::Affine),
    }
}

/// Applies a linear layer (dense, conv, average pooling, flatten).
pub(crate) fn apply_linear(
    layer: &Layer,
    in_shape: &[usize],
    input: &[f64],
    mode: LinearMode,
) -> Vec<f64> {
    match layer {
        Layer::Dense { weights, bias } => {
            let (rows, cols) = (weights.shape()[0], weights.shape()[1]);
            let w = weights.data();
            (0..rows)
                .map(|o| {
                    let row = &w[o * cols..(o + 1) * cols];
                    let acc: f64 = match mode {
                        LinearMode::SquaredWeights => {
                            row.iter().zip(input).map(|(a, b)| a * a * b).sum()
                        }
                        _ => row.iter().zip(input).map(|(a, b)| a * b).sum(),
                    };
                    if mode == LinearMode::Affine {
                        acc + bias.data()[o]
                    } else {
                        acc
                    }
                })
                .collect()
        }
        Layer::Conv1d { kernel, bias } => {
            let ks = kernel.shape();
            conv(
                in_shape,
                [1, ks[0], ks[1], ks[2]],
                kernel.data(),
                bias.data(),
                input,
                mode,
            )
        }
        Layer::Conv2d { kernel, bias } => {
            let ks = kernel.shape();
            conv(
                in_shape,
                [ks[0], ks[1], ks[2], ks[3]],
                kernel.data(),
                bias.data(),
                input,
                mode,
            )
        }
        Layer::AvgPool { window } => {
            let n = window.iter().product::<usize>() as f64;
            let scale = match mode {
                LinearMode::SquaredWeights => 1.0 / (n * n),
                _ => 1.0 / n,
            };
            pool_windows(in_shape, window)
                .map(|idx| idx.iter().map(|&i| input[i]).sum::<f64>() * scale)
                .collect()
        }
        Layer::GlobalAvgPool => {
            let c = in_shape[in_shape.len() - 1];
            let positions = input.len() / c;
            let n = positions as f64;
            let scale = match mode {
                LinearMode::SquaredWeights => 1.0 / (n * n),
                _ => 1.0 / n,
            };
            (0..c)
                .map(|ch| (0..positions).map(|p| input[p * c + ch]).sum::<f64>() * scale)
                .collect()
        }
        Layer::Flatten => input.to_vec(),
        Layer::Relu | Layer::MaxPool { .. } => {
            unreachable!("{} is not a linear layer", layer.kind())
        }
    }
}

fn conv(
    in_shape: &[usize],
    [kh, kw, cin, cout]: [usize; 4],
    kernel: &[f64],
    bias: &[f64],
    input: &[f64],
    mode: LinearMode,
) -> Vec<f64> {
    let (h, w, _) = spatial_view(in_shape);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; oh * ow * cout];
    for y in 0..oh {
        for x in 0..ow {
            let base = (y * ow + x) * cout;
            let cell = &mut out[base..base + cout];
            if mode == LinearMode::Affine {
                cell.copy_from_slice(bias);
            }
            for dy in 0..kh {
                for dx in 0..kw {
                    let in_base = ((y + dy) * w + (x + dx)) * cin;
                    let k_base = (dy * kw + dx) * cin;
                    for ci in 0..cin {
                        let v = input[in_base + ci];
                        if v == 0.0 {
                            continue;
                        }
                        let k_row = &kernel[(k_base + ci) * cout..(k_base + ci + 1) * cout];
                        for (o, &k) in cell.iter_mut().zip(k_row) {
                            *o += match mode {
                                LinearMode::SquaredWeights => k * k * v,
                                _ => k * v,
                            };
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(
    in_shape: &[usize],
    [kh, kw, cin, cout]: [usize; 4],
    kernel: &[f64],
    grad_out: &[f64],
) -> Vec<f64> {
    let (h, w, _) = spatial_view(in_shape);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut grad_in = vec![0.0; h * w * cin];
    for y in 0..oh {
        for x in 0..ow {
            let g = &grad_out[(y * ow + x) * cout..(y * ow + x + 1) * cout];
            for dy in 0..kh {
                for dx in 0..kw {
                    let in_base = ((y + dy) * w + (x + dx)) * cin;
                    let k_base = (dy * kw + dx) * cin;
                    for ci in 0..cin {
                        let k_row = &kernel[(k_base + ci) * cout..(k_base + ci + 1) * cout];
                        grad_in[in_base + ci] +=
                            k_row.iter().zip(g).map(|(k, g)| k * g).sum::<f64>();
                    }
                }
            }
        }
    }
    grad_in
}

/// Flat input indices of every pooling window, in output order. Indices
/// within a window are ascending (row-major).
pub(crate) fn pool_windows<'a>(
    in_shape: &'a [usize],
    window: &'a [usize],
) -> impl Iterator<Item = Vec<usize>> + 'a {
    let (h, w, c) = spatial_view(in_shape);
    let (wh, ww) = match *window {
        [ww] => (1, ww),
        [wh, ww] => (wh, ww),
        _ => unreachable!("window validated against input rank"),
    };
    let (oh, ow) = (h / wh, w / ww);
    (0..oh).flat_map(move |y| {
        (0..ow).flat_map(move |x| {
            (0..c).map(move |ch| {
                let mut idx = Vec::with_capacity(wh * ww);
                for dy in 0..wh {
                    for dx in 0..ww {
                        idx.push(((y * wh + dy) * w + (x * ww + dx)) * c + ch);
                    }
                }
                idx
            })
        })
    })
}

/// Max pooling; also returns the winning input index per output. Ties go to
/// the lowest index.
pub(crate) fn maxpool(
    in_shape: &[usize],
    window: &[usize],
    input: &[f64],
) -> (Vec<f64>, Vec<usize>) {
    pool_windows(in_shape, window)
        .map(|idx| {
            let mut best = idx[0];
            for &i in &idx[1..] {
                if input[i] > input[best] {
                    best = i;
                }
            }
            (input[best], best)
        })
        .unzip()
}

/// Reverse-mode gradient of output `class` with respect to the flat input.
pub(crate) fn input_gradient(model: &Model, x: &[f64], class: usize) -> Vec<f64> {
    let layers = model.layers();
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    let mut argmax: Vec<Option<Vec<usize>>> = Vec::with_capacity(layers.len());
    let mut act = x.to_vec();
    for (idx, layer) in layers.iter().enumerate() {
        let shape = model.shape_at(idx);
        let (next, winners) = match layer {
            Layer::MaxPool { window } => {
                let (out, w) = maxpool(shape, window, &act);
                (out, Some(w))
            }
            _ => (forward_layer(layer, shape, &act), None),
        };
        inputs.push(std::mem::replace(&mut act, next));
        argmax.push(winners);
    }

    let mut grad = vec![0.0; act.len()];
    grad[class] = 1.0;
    for (idx, layer) in layers.iter().enumerate().rev() {
        let shape = model.shape_at(idx);
        let input = &inputs[idx];
        grad = match layer {
            Layer::Dense { weights, .. } => {
                let (rows, cols) = (weights.shape()[0], weights.shape()[1]);
                let w = weights.data();
                let mut g_in = vec![0.0; cols];
                for (o, &g) in grad.iter().enumerate().take(rows) {
                    if g == 0.0 {
                        continue;
                    }
                    for (gi, &wv) in g_in.iter_mut().zip(&w[o * cols..(o + 1) * cols]) {
                        *gi += wv * g;
                    }
                }
                g_in
            }
            Layer::Conv1d { kernel, .. } => {
                let ks = kernel.shape();
                conv_backward(shape, [1, ks[0], ks[1], ks[2]], kernel.data(), &grad)
            }
            Layer::Conv2d { kernel, .. } => {
                let ks = kernel.shape();
                conv_backward(shape, [ks[0], ks[1], ks[2], ks[3]], kernel.data(), &grad)
            }
            Layer::Relu => input
                .iter()
                .zip(&grad)
                .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                .collect(),
            Layer::MaxPool { .. } => {
                let mut g_in = vec![0.0; input.len()];
                let winners = argmax[idx].as_ref().expect("recorded on the way up");
                for (&w, &g) in winners.iter().zip(&grad) {
                    g_in[w] += g;
                }
                g_in
            }
            Layer::AvgPool { window } => {
                let n = window.iter().product::<usize>() as f64;
                let mut g_in = vec![0.0; input.len()];
                for (idxs, &g) in pool_windows(shape, window).zip(&grad) {
                    for i in idxs {
                        g_in[i] += g / n;
                    }
                }
                g_in
            }
            Layer::GlobalAvgPool => {
                let c = shape[shape.len() - 1];
                let n = (input.len() / c) as f64;
                (0..input.len()).map(|i| grad[i % c] / n).collect()
            }
            Layer::Flatten => grad,
        };
    }
    grad
}

//! Gradient verification harness.
//!
//! [`RefNet`] is a deliberately independent re-implementation of the
//! forward pass: plain `f64` loops, no im2col, no GEMM. It serves two
//! purposes — an oracle for the fast `f32` forward pass, and a
//! low-noise loss surface for central finite differences, so analytic
//! gradients from [`Model::loss_and_grads`] can be checked at tight
//! tolerances without `f32` round-off drowning the signal.

use super::{LayerSpec, LayerState, Model};
use ndarray::{Array1, Array2, Array3};

/// Which tensor of a parameterized layer a coordinate addresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Param {
    Weight,
    Bias,
}

#[derive(Clone, Debug)]
enum RefLayer {
    Conv { w: Array3<f64>, b: Array1<f64>, stride: usize },
    Relu,
    Pool { width: usize },
    AvgPool { width: usize },
    Flatten,
    Dense { w: Array2<f64>, b: Array1<f64> },
    Softmax,
}

/// Double-precision reference network mirroring a model's weights.
#[derive(Clone, Debug)]
pub struct RefNet {
    layers: Vec<RefLayer>,
    input_length: usize,
}

impl RefNet {
    pub fn from_model(model: &Model) -> RefNet {
        let layers = model
            .spec
            .layers
            .iter()
            .zip(&model.weights)
            .map(|(layer, state)| match (layer, state) {
                (LayerSpec::Conv1d { stride, .. }, LayerState::Conv { w, b }) => RefLayer::Conv {
                    w: w.mapv(f64::from),
                    b: b.mapv(f64::from),
                    stride: *stride,
                },
                (LayerSpec::Relu, _) => RefLayer::Relu,
                (LayerSpec::MaxPool1d { width }, _) => RefLayer::Pool { width: *width },
                (LayerSpec::AvgPool1d { width }, _) => RefLayer::AvgPool { width: *width },
                (LayerSpec::Flatten, _) => RefLayer::Flatten,
                (LayerSpec::Dense { .. }, LayerState::Dense { w, b }) => RefLayer::Dense {
                    w: w.mapv(f64::from),
                    b: b.mapv(f64::from),
                },
                (LayerSpec::Softmax, _) => RefLayer::Softmax,
                _ => unreachable!("weights aligned with layers"),
            })
            .collect();
        RefNet { layers, input_length: model.spec.input_length }
    }

    /// Adds `delta` to one parameter coordinate (row-major flat index).
    pub fn perturb(&mut self, layer: usize, which: Param, index: usize, delta: f64) {
        match (&mut self.layers[layer], which) {
            (RefLayer::Conv { w, .. }, Param::Weight) => {
                *w.as_slice_mut().unwrap().get_mut(index).expect("index in range") += delta;
            }
            (RefLayer::Conv { b, .. }, Param::Bias) => b[index] += delta,
            (RefLayer::Dense { w, .. }, Param::Weight) => {
                *w.as_slice_mut().unwrap().get_mut(index).expect("index in range") += delta;
            }
            (RefLayer::Dense { b, .. }, Param::Bias) => b[index] += delta,
            _ => panic!("layer {layer} has no parameters"),
        }
    }

    /// Class probabilities for one input row (naive loops).
    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_length);
        // channels × length
        let mut spatial: Vec<Vec<f64>> = vec![x.to_vec()];
        let mut flat: Vec<f64> = Vec::new();
        let mut is_flat = false;
        for layer in &self.layers {
            match layer {
                RefLayer::Conv { w, b, stride } => {
                    let (filters, in_ch, kernel) = w.dim();
                    let len = spatial[0].len();
                    let out_len = (len - kernel) / stride + 1;
                    let mut out = vec![vec![0.0; out_len]; filters];
                    for (f, out_row) in out.iter_mut().enumerate() {
                        for (t, slot) in out_row.iter_mut().enumerate() {
                            let mut acc = b[f];
                            for c in 0..in_ch {
                                for k in 0..kernel {
                                    acc += w[[f, c, k]] * spatial[c][t * stride + k];
                                }
                            }
                            *slot = acc;
                        }
                    }
                    spatial = out;
                }
                RefLayer::Relu => {
                    if is_flat {
                        for v in &mut flat {
                            *v = v.max(0.0);
                        }
                    } else {
                        for ch in &mut spatial {
                            for v in ch {
                                *v = v.max(0.0);
                            }
                        }
                    }
                }
                RefLayer::Pool { width } => {
                    let out_len = spatial[0].len() / width;
                    spatial = spatial
                        .iter()
                        .map(|ch| {
                            (0..out_len)
                                .map(|t| {
                                    ch[t * width..(t + 1) * width]
                                        .iter()
                                        .copied()
                                        .fold(f64::NEG_INFINITY, f64::max)
                                })
                                .collect()
                        })
                        .collect();
                }
                RefLayer::AvgPool { width } => {
                    let out_len = spatial[0].len() / width;
                    spatial = spatial
                        .iter()
                        .map(|ch| {
                            (0..out_len)
                                .map(|t| {
                                    ch[t * width..(t + 1) * width].iter().sum::<f64>()
                                        / *width as f64
                                })
                                .collect()
                        })
                        .collect();
                }
                RefLayer::Flatten => {
                    flat = spatial.iter().flatten().copied().collect();
                    is_flat = true;
                }
                RefLayer::Dense { w, b } => {
                    let (in_f, out_f) = w.dim();
                    assert_eq!(flat.len(), in_f);
                    let mut out = vec![0.0; out_f];
                    for (j, slot) in out.iter_mut().enumerate() {
                        let mut acc = b[j];
                        for (i, &v) in flat.iter().enumerate() {
                            acc += v * w[[i, j]];
                        }
                        *slot = acc;
                    }
                    flat = out;
                }
                RefLayer::Softmax => {
                    let max = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for v in &mut flat {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    for v in &mut flat {
                        *v /= sum;
                    }
                }
            }
        }
        flat
    }

    /// Mean cross-entropy over a batch of rows.
    pub fn loss(&self, x: &Array2<f64>, y: &[u16]) -> f64 {
        let mut total = 0.0;
        for (row, &label) in x.rows().into_iter().zip(y) {
            let probs = self.forward_one(row.as_slice().unwrap());
            total += -probs[usize::from(label)].ln();
        }
        total / y.len() as f64
    }
}

/// Central finite difference of the loss with respect to one input
/// coordinate.
pub fn fd_input(net: &RefNet, x: &Array2<f64>, y: &[u16], coord: (usize, usize), step: f64) -> f64 {
    let mut plus = x.clone();
    plus[[coord.0, coord.1]] += step;
    let mut minus = x.clone();
    minus[[coord.0, coord.1]] -= step;
    (net.loss(&plus, y) - net.loss(&minus, y)) / (2.0 * step)
}

/// Central finite difference with respect to one parameter coordinate.
pub fn fd_param(
    net: &RefNet,
    x: &Array2<f64>,
    y: &[u16],
    layer: usize,
    which: Param,
    index: usize,
    step: f64,
) -> f64 {
    let mut plus = net.clone();
    plus.perturb(layer, which, index, step);
    let mut minus = net.clone();
    minus.perturb(layer, which, index, -step);
    (plus.loss(x, y) - minus.loss(x, y)) / (2.0 * step)
}

/// Scale-aware relative error.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Converts an f32 row matrix to f64 for the reference net.
pub fn to_f64(x: &Array2<f32>) -> Array2<f64> {
    x.mapv(f64::from)
}

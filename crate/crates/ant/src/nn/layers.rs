//! Layer primitives: parameter containers and forward/backward kernels.
//!
//! Convolution is computed as one matrix product per batch over an
//! im2col patch matrix, so the hot path is a single deterministic GEMM.
//! All activations are `f32`; loss bookkeeping upgrades to `f64` in the
//! training module.

use ndarray::{Array1, Array2, Array3, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One layer of a model architecture.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d { filters: usize, kernel: usize, stride: usize },
    Relu,
    MaxPool1d { width: usize },
    AvgPool1d { width: usize },
    Flatten,
    Dense { units: usize },
    Softmax,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool1d { .. } => "max_pool1d",
            LayerSpec::AvgPool1d { .. } => "avg_pool1d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Softmax => "softmax",
        }
    }
}

/// Parameters of one layer. Stateless layers hold no tensors. The same
/// type doubles as the per-layer gradient container returned by
/// `loss_and_grads`, aligned index-for-index with the layer list.
#[derive(Clone, Debug)]
pub enum LayerState {
    /// Weight `filters × in_channels × kernel`, bias `filters`.
    Conv { w: Array3<f32>, b: Array1<f32> },
    /// Weight `in_features × out_features`, bias `out_features`.
    Dense { w: Array2<f32>, b: Array1<f32> },
    Stateless,
}

impl LayerState {
    /// Number of scalar parameters.
    pub fn param_count(&self) -> usize {
        match self {
            LayerState::Conv { w, b } => w.len() + b.len(),
            LayerState::Dense { w, b } => w.len() + b.len(),
            LayerState::Stateless => 0,
        }
    }
}

/// Activations flowing between layers.
#[derive(Clone, Debug)]
pub enum Value {
    /// batch × channels × length
    Spatial(Array3<f32>),
    /// batch × features
    Flat(Array2<f32>),
}

impl Value {
    pub fn batch_len(&self) -> usize {
        match self {
            Value::Spatial(a) => a.dim().0,
            Value::Flat(a) => a.dim().0,
        }
    }

    /// Panics if the value is spatial; shape validation runs before any
    /// forward pass, so a mismatch here is an internal bug.
    pub fn flat(&self) -> &Array2<f32> {
        match self {
            Value::Flat(a) => a,
            Value::Spatial(_) => unreachable!("spatial value where flat expected"),
        }
    }

    pub fn spatial(&self) -> &Array3<f32> {
        match self {
            Value::Spatial(a) => a,
            Value::Flat(_) => unreachable!("flat value where spatial expected"),
        }
    }
}

/// Per-layer forward artifacts kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub(crate) struct LayerCache {
    /// The layer's input.
    pub input: Option<Value>,
    /// Convolution patch matrix `(ch·kernel) × (batch·out_len)`.
    pub col: Option<Array2<f32>>,
    /// Max-pool winner positions (input index along length, per output slot).
    pub argmax: Option<Array3<usize>>,
}

/// Seeded uniform init in `[−1/√fan_in, +1/√fan_in]`; biases start at zero.
pub(crate) fn init_state(spec: &LayerSpec, in_channels: usize, in_features: usize, seed: u64) -> LayerState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *spec {
        LayerSpec::Conv1d { filters, kernel, .. } => {
            let fan_in = in_channels * kernel;
            let bound = 1.0 / (fan_in as f32).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let data: Vec<f32> = (0..filters * in_channels * kernel)
                .map(|_| dist.sample(&mut rng))
                .collect();
            LayerState::Conv {
                w: Array3::from_shape_vec((filters, in_channels, kernel), data).unwrap(),
                b: Array1::zeros(filters),
            }
        }
        LayerSpec::Dense { units } => {
            let bound = 1.0 / (in_features as f32).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let data: Vec<f32> = (0..in_features * units).map(|_| dist.sample(&mut rng)).collect();
            LayerState::Dense {
                w: Array2::from_shape_vec((in_features, units), data).unwrap(),
                b: Array1::zeros(units),
            }
        }
        _ => LayerState::Stateless,
    }
}

// --- convolution --------------------------------------------------------------

/// Patch matrix: `col[c·K + k, b·L_out + t] = x[b, c, t·stride + k]`.
pub(crate) fn im2col(x: &Array3<f32>, kernel: usize, stride: usize) -> (Array2<f32>, usize) {
    let (bsz, ch, len) = x.dim();
    let out_len = (len - kernel) / stride + 1;
    let mut col = Array2::zeros((ch * kernel, bsz * out_len));
    for bi in 0..bsz {
        for c in 0..ch {
            for k in 0..kernel {
                let row = c * kernel + k;
                for t in 0..out_len {
                    col[[row, bi * out_len + t]] = x[[bi, c, t * stride + k]];
                }
            }
        }
    }
    (col, out_len)
}

fn weight_matrix(w: &Array3<f32>) -> Array2<f32> {
    let (f, c, k) = w.dim();
    let mut m = Array2::zeros((f, c * k));
    for fi in 0..f {
        for ci in 0..c {
            for ki in 0..k {
                m[[fi, ci * k + ki]] = w[[fi, ci, ki]];
            }
        }
    }
    m
}

pub(crate) fn conv_forward(
    x: &Array3<f32>,
    w: &Array3<f32>,
    b: &Array1<f32>,
    stride: usize,
) -> (Array3<f32>, Array2<f32>) {
    let (bsz, _, _) = x.dim();
    let (filters, _, kernel) = w.dim();
    let (col, out_len) = im2col(x, kernel, stride);
    let mut out2 = weight_matrix(w).dot(&col);
    out2 += &b.view().insert_axis(Axis(1));
    let mut out = Array3::zeros((bsz, filters, out_len));
    for bi in 0..bsz {
        for fi in 0..filters {
            for t in 0..out_len {
                out[[bi, fi, t]] = out2[[fi, bi * out_len + t]];
            }
        }
    }
    (out, col)
}

pub(crate) fn conv_backward(
    g: &Array3<f32>,
    col: &Array2<f32>,
    w: &Array3<f32>,
    stride: usize,
    input_dim: (usize, usize, usize),
) -> (Array3<f32>, Array3<f32>, Array1<f32>) {
    let (bsz, filters, out_len) = g.dim();
    let (_, in_ch, kernel) = w.dim();
    let mut g2 = Array2::zeros((filters, bsz * out_len));
    for bi in 0..bsz {
        for fi in 0..filters {
            for t in 0..out_len {
                g2[[fi, bi * out_len + t]] = g[[bi, fi, t]];
            }
        }
    }
    let dw2 = g2.dot(&col.t());
    let mut dw = Array3::zeros(w.dim());
    for fi in 0..filters {
        for ci in 0..in_ch {
            for ki in 0..kernel {
                dw[[fi, ci, ki]] = dw2[[fi, ci * kernel + ki]];
            }
        }
    }
    let db = g2.sum_axis(Axis(1));
    let dcol = weight_matrix(w).t().dot(&g2);
    let mut dx = Array3::zeros(input_dim);
    for bi in 0..bsz {
        for ci in 0..in_ch {
            for ki in 0..kernel {
                let row = ci * kernel + ki;
                for t in 0..out_len {
                    dx[[bi, ci, t * stride + ki]] += dcol[[row, bi * out_len + t]];
                }
            }
        }
    }
    (dx, dw, db)
}

// --- pooling -------------------------------------------------------------------

/// Non-overlapping max pool (stride == width); trailing positions that do
/// not fill a window are dropped. Ties go to the earliest index so the
/// backward routing is deterministic.
pub(crate) fn pool_forward(x: &Array3<f32>, width: usize) -> (Array3<f32>, Array3<usize>) {
    let (bsz, ch, len) = x.dim();
    let out_len = len / width;
    let mut out = Array3::zeros((bsz, ch, out_len));
    let mut argmax = Array3::zeros((bsz, ch, out_len));
    for bi in 0..bsz {
        for c in 0..ch {
            for t in 0..out_len {
                let mut best = f32::NEG_INFINITY;
                let mut best_idx = t * width;
                for k in 0..width {
                    let idx = t * width + k;
                    let v = x[[bi, c, idx]];
                    if v > best {
                        best = v;
                        best_idx = idx;
                    }
                }
                out[[bi, c, t]] = best;
                argmax[[bi, c, t]] = best_idx;
            }
        }
    }
    (out, argmax)
}

pub(crate) fn pool_backward(
    g: &Array3<f32>,
    argmax: &Array3<usize>,
    input_dim: (usize, usize, usize),
) -> Array3<f32> {
    let (bsz, ch, out_len) = g.dim();
    let mut dx = Array3::zeros(input_dim);
    for bi in 0..bsz {
        for c in 0..ch {
            for t in 0..out_len {
                dx[[bi, c, argmax[[bi, c, t]]]] += g[[bi, c, t]];
            }
        }
    }
    dx
}

pub(crate) fn avg_pool_forward(x: &Array3<f32>, width: usize) -> Array3<f32> {
    let (bsz, ch, len) = x.dim();
    let out_len = len / width;
    let mut out = Array3::zeros((bsz, ch, out_len));
    for bi in 0..bsz {
        for c in 0..ch {
            for t in 0..out_len {
                let mut sum = 0.0f32;
                for k in 0..width {
                    sum += x[[bi, c, t * width + k]];
                }
                out[[bi, c, t]] = sum / width as f32;
            }
        }
    }
    out
}

pub(crate) fn avg_pool_backward(
    g: &Array3<f32>,
    width: usize,
    input_dim: (usize, usize, usize),
) -> Array3<f32> {
    let (bsz, ch, out_len) = g.dim();
    let mut dx = Array3::zeros(input_dim);
    for bi in 0..bsz {
        for c in 0..ch {
            for t in 0..out_len {
                let share = g[[bi, c, t]] / width as f32;
                for k in 0..width {
                    dx[[bi, c, t * width + k]] = share;
                }
            }
        }
    }
    dx
}

// --- shape shuffling -----------------------------------------------------------

/// `(B, C, L)` → `(B, C·L)` with channel-major feature order.
pub(crate) fn flatten3(x: &Array3<f32>) -> Array2<f32> {
    let (bsz, ch, len) = x.dim();
    let mut out = Array2::zeros((bsz, ch * len));
    for bi in 0..bsz {
        for c in 0..ch {
            for l in 0..len {
                out[[bi, c * len + l]] = x[[bi, c, l]];
            }
        }
    }
    out
}

pub(crate) fn unflatten3(x: &Array2<f32>, ch: usize, len: usize) -> Array3<f32> {
    let bsz = x.dim().0;
    let mut out = Array3::zeros((bsz, ch, len));
    for bi in 0..bsz {
        for c in 0..ch {
            for l in 0..len {
                out[[bi, c, l]] = x[[bi, c * len + l]];
            }
        }
    }
    out
}

// --- softmax --------------------------------------------------------------------

/// Row-wise softmax with max-shift stabilization.
pub(crate) fn softmax_rows(logits: &Array2<f32>) -> Array2<f32> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f32 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

//! A small differentiable compute core: 1-D convolutions, dense layers,
//! max pooling, softmax cross-entropy, seeded SGD training — and, the part
//! the perturbation search depends on, gradients of the loss with respect
//! to the *input vector*, returned alongside the parameter gradients from
//! a single backward pass.

pub mod gradcheck;
mod io;
mod layers;
mod train;

pub use io::{load_model, save_model};
pub use layers::{LayerSpec, LayerState, Value};
pub use train::{
    evaluate, metrics_from_predictions, predict_rows, stack_samples, train, ClassMetrics,
    EvalMetrics, TrainConfig,
};

use crate::features::{EncodingKind, NormStats};
use crate::seed::{subseed, Fnv1a};
use layers::LayerCache;
use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid model spec: {0}")]
    BadSpec(String),
    #[error("input length {got} does not match model input length {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("sample label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u16, classes: usize },
    #[error("non-finite loss at sample {sample} of the batch")]
    NonFiniteLoss { sample: usize },
    #[error("training diverged: non-finite loss in epoch {epoch}, batch {batch}, sample {sample}")]
    Diverged { epoch: usize, batch: usize, sample: usize },
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("empty dataset: {0}")]
    EmptyData(String),
    #[error("samples use encoding {got}, model expects {expected}")]
    EncodingMismatch { expected: String, got: String },
    #[error("model file {path}: {reason}")]
    BadModelFile { path: PathBuf, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Architecture family. The dense-only family exists to study whether
/// perturbations crafted against one architecture carry over to another.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchFamily {
    Cnn1d,
    Sae,
}

/// An ordered layer list plus input/output dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    pub input_length: usize,
    pub class_count: usize,
    pub family: ArchFamily,
}

/// Activation shape while walking the layer chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ShapeState {
    Spatial { channels: usize, len: usize },
    Flat { features: usize },
}

fn step_shape(layer: &LayerSpec, shape: ShapeState) -> Result<ShapeState, String> {
    match (layer, shape) {
        (LayerSpec::Conv1d { filters, kernel, stride }, ShapeState::Spatial { channels: _, len }) => {
            if *filters == 0 || *kernel == 0 || *stride == 0 {
                return Err("conv1d filters, kernel, and stride must be ≥ 1".into());
            }
            if *kernel > len {
                return Err(format!("conv1d kernel {kernel} exceeds input length {len}"));
            }
            Ok(ShapeState::Spatial { channels: *filters, len: (len - kernel) / stride + 1 })
        }
        (LayerSpec::Conv1d { .. }, ShapeState::Flat { .. }) => {
            Err("conv1d requires a spatial input (place it before flatten)".into())
        }
        (LayerSpec::Relu, s) => Ok(s),
        (LayerSpec::MaxPool1d { width }, ShapeState::Spatial { channels, len }) => {
            if *width == 0 {
                return Err("max_pool1d width must be ≥ 1".into());
            }
            if len / width == 0 {
                return Err(format!("max_pool1d width {width} exceeds input length {len}"));
            }
            Ok(ShapeState::Spatial { channels, len: len / width })
        }
        (LayerSpec::MaxPool1d { .. }, ShapeState::Flat { .. }) => {
            Err("max_pool1d requires a spatial input".into())
        }
        (LayerSpec::AvgPool1d { width }, ShapeState::Spatial { channels, len }) => {
            if *width == 0 {
                return Err("avg_pool1d width must be ≥ 1".into());
            }
            if len / width == 0 {
                return Err(format!("avg_pool1d width {width} exceeds input length {len}"));
            }
            Ok(ShapeState::Spatial { channels, len: len / width })
        }
        (LayerSpec::AvgPool1d { .. }, ShapeState::Flat { .. }) => {
            Err("avg_pool1d requires a spatial input".into())
        }
        (LayerSpec::Flatten, ShapeState::Spatial { channels, len }) => {
            Ok(ShapeState::Flat { features: channels * len })
        }
        (LayerSpec::Flatten, ShapeState::Flat { .. }) => Err("flatten applied twice".into()),
        (LayerSpec::Dense { units }, ShapeState::Flat { .. }) if *units == 0 => {
            Err("dense units must be ≥ 1".into())
        }
        (LayerSpec::Dense { units }, ShapeState::Flat { .. }) => {
            Ok(ShapeState::Flat { features: *units })
        }
        (LayerSpec::Dense { .. }, ShapeState::Spatial { .. }) => {
            Err("dense requires a flat input (insert flatten first)".into())
        }
        (LayerSpec::Softmax, s @ ShapeState::Flat { .. }) => Ok(s),
        (LayerSpec::Softmax, ShapeState::Spatial { .. }) => {
            Err("softmax requires a flat input".into())
        }
    }
}

impl ModelSpec {
    /// Checks layer-chain compatibility and family constraints.
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |msg: String| Err(NnError::BadSpec(msg));
        if self.input_length == 0 {
            return bad("input_length must be ≥ 1".into());
        }
        if self.class_count < 2 {
            return bad("class_count must be ≥ 2".into());
        }
        if self.layers.is_empty() {
            return bad("layer list is empty".into());
        }
        if self.layers.last() != Some(&LayerSpec::Softmax) {
            return bad("last layer must be softmax".into());
        }
        if self.layers[..self.layers.len() - 1].contains(&LayerSpec::Softmax) {
            return bad("softmax may appear only as the last layer".into());
        }
        if self.family == ArchFamily::Sae {
            let dense_only = self.layers.iter().all(|l| {
                matches!(
                    l,
                    LayerSpec::Flatten | LayerSpec::Dense { .. } | LayerSpec::Relu | LayerSpec::Softmax
                )
            });
            if !dense_only {
                return bad("sae family permits only flatten/dense/relu/softmax layers".into());
            }
        }
        let mut shape = ShapeState::Spatial { channels: 1, len: self.input_length };
        for (i, layer) in self.layers.iter().enumerate() {
            shape = step_shape(layer, shape)
                .map_err(|msg| NnError::BadSpec(format!("layer {i} ({}): {msg}", layer.name())))?;
        }
        match shape {
            ShapeState::Flat { features } if features == self.class_count => Ok(()),
            ShapeState::Flat { features } => bad(format!(
                "final layer outputs {features} values, expected {} classes",
                self.class_count
            )),
            ShapeState::Spatial { .. } => unreachable!("softmax enforced flat output"),
        }
    }

    /// Shape entering each layer (validated spec), used by init and model IO.
    fn input_shapes(&self) -> Vec<ShapeState> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut shape = ShapeState::Spatial { channels: 1, len: self.input_length };
        for layer in &self.layers {
            shapes.push(shape);
            shape = step_shape(layer, shape).expect("validated spec");
        }
        shapes
    }
}

/// Reference convolutional architecture for byte/time-series vectors.
pub fn default_cnn(input_length: usize, class_count: usize) -> ModelSpec {
    // Global average over the final conv map: the head sees pattern
    // statistics rather than absolute offsets, so short content shifts
    // (pads, spliced packets) don't read as features by themselves.
    let l1 = (input_length.saturating_sub(7)) / 3 + 1;
    let l2 = l1 / 2;
    let l3 = l2.saturating_sub(4);
    ModelSpec {
        layers: vec![
            LayerSpec::Conv1d { filters: 16, kernel: 7, stride: 3 },
            LayerSpec::Relu,
            LayerSpec::MaxPool1d { width: 2 },
            LayerSpec::Conv1d { filters: 32, kernel: 5, stride: 1 },
            LayerSpec::Relu,
            LayerSpec::AvgPool1d { width: l3.max(1) },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 64 },
            LayerSpec::Relu,
            LayerSpec::Dense { units: class_count },
            LayerSpec::Softmax,
        ],
        input_length,
        class_count,
        family: ArchFamily::Cnn1d,
    }
}

/// Reference dense (autoencoder-shaped) architecture, trained end-to-end
/// with the supervised loss.
pub fn default_sae(input_length: usize, class_count: usize) -> ModelSpec {
    ModelSpec {
        layers: vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 256 },
            LayerSpec::Relu,
            LayerSpec::Dense { units: 128 },
            LayerSpec::Relu,
            LayerSpec::Dense { units: class_count },
            LayerSpec::Softmax,
        ],
        input_length,
        class_count,
        family: ArchFamily::Sae,
    }
}

/// A trained (or freshly initialized) classifier. Immutable after
/// training; concurrent read-only inference is safe.
#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    /// One entry per layer, `Stateless` where the layer has no parameters.
    pub weights: Vec<LayerState>,
    pub encoding: EncodingKind,
    /// Standardization constants for time-series encodings; `None` for
    /// byte encodings.
    pub norm_stats: Option<NormStats>,
    pub labels: Vec<String>,
    pub train_seed: u64,
}

impl Model {
    /// Fresh model with seeded uniform init (`±1/√fan_in`, zero biases).
    pub fn new(
        spec: ModelSpec,
        encoding: EncodingKind,
        labels: Vec<String>,
        norm_stats: Option<NormStats>,
        seed: u64,
    ) -> Result<Model, NnError> {
        spec.validate()?;
        if labels.len() != spec.class_count {
            return Err(NnError::BadSpec(format!(
                "{} labels provided for {} classes",
                labels.len(),
                spec.class_count
            )));
        }
        let shapes = spec.input_shapes();
        let weights = spec
            .layers
            .iter()
            .zip(&shapes)
            .enumerate()
            .map(|(i, (layer, shape))| {
                let (ch, feat) = match *shape {
                    ShapeState::Spatial { channels, .. } => (channels, 0),
                    ShapeState::Flat { features } => (0, features),
                };
                layers::init_state(layer, ch, feat, subseed(seed, &format!("init/layer{i}")))
            })
            .collect();
        Ok(Model { spec, weights, encoding, norm_stats, labels, train_seed: seed })
    }

    fn check_input(&self, x: &Array2<f32>) -> Result<(), NnError> {
        if x.dim().1 != self.spec.input_length {
            return Err(NnError::ShapeMismatch {
                expected: self.spec.input_length,
                got: x.dim().1,
            });
        }
        Ok(())
    }

    /// Runs the layer chain. With `keep_caches`, records per-layer inputs
    /// and kernel artifacts for a subsequent backward pass.
    fn run_layers(
        &self,
        x: &Array2<f32>,
        keep_caches: bool,
    ) -> Result<(Array2<f32>, Vec<LayerCache>), NnError> {
        self.check_input(x)?;
        let bsz = x.dim().0;
        let mut value = Value::Spatial(unflatten_input(x));
        let mut caches: Vec<LayerCache> = Vec::new();
        if keep_caches {
            caches.reserve(self.spec.layers.len());
        }
        for (layer, state) in self.spec.layers.iter().zip(&self.weights) {
            let mut cache = LayerCache::default();
            if keep_caches {
                cache.input = Some(value.clone());
            }
            value = match (layer, state) {
                (LayerSpec::Conv1d { stride, .. }, LayerState::Conv { w, b }) => {
                    let (out, col) = layers::conv_forward(value.spatial(), w, b, *stride);
                    if keep_caches {
                        cache.col = Some(col);
                    }
                    Value::Spatial(out)
                }
                (LayerSpec::Relu, _) => match value {
                    Value::Spatial(a) => Value::Spatial(a.mapv(|v| v.max(0.0))),
                    Value::Flat(a) => Value::Flat(a.mapv(|v| v.max(0.0))),
                },
                (LayerSpec::MaxPool1d { width }, _) => {
                    let (out, argmax) = layers::pool_forward(value.spatial(), *width);
                    if keep_caches {
                        cache.argmax = Some(argmax);
                    }
                    Value::Spatial(out)
                }
                (LayerSpec::AvgPool1d { width }, _) => {
                    Value::Spatial(layers::avg_pool_forward(value.spatial(), *width))
                }
                (LayerSpec::Flatten, _) => Value::Flat(layers::flatten3(value.spatial())),
                (LayerSpec::Dense { .. }, LayerState::Dense { w, b }) => {
                    let mut out = value.flat().dot(w);
                    out += b;
                    Value::Flat(out)
                }
                (LayerSpec::Softmax, _) => Value::Flat(layers::softmax_rows(value.flat())),
                _ => unreachable!("weights aligned with layers"),
            };
            if keep_caches {
                caches.push(cache);
            }
        }
        match value {
            Value::Flat(p) => {
                debug_assert_eq!(p.dim(), (bsz, self.spec.class_count));
                Ok((p, caches))
            }
            Value::Spatial(_) => unreachable!("softmax output is flat"),
        }
    }

    /// Class probabilities for a batch of encoded vectors (rows).
    pub fn forward(&self, x: &Array2<f32>) -> Result<Array2<f32>, NnError> {
        Ok(self.run_layers(x, false)?.0)
    }

    /// Argmax class per row.
    pub fn predict(&self, x: &Array2<f32>) -> Result<Vec<u16>, NnError> {
        let probs = self.forward(x)?;
        Ok(argmax_rows(&probs))
    }

    /// Mean softmax cross-entropy over the batch plus, from one backward
    /// pass, gradients with respect to every parameter tensor and to the
    /// input vectors themselves.
    pub fn loss_and_grads(
        &self,
        x: &Array2<f32>,
        y: &[u16],
    ) -> Result<(f64, Vec<LayerState>, Array2<f32>), NnError> {
        let bsz = x.dim().0;
        if y.len() != bsz {
            return Err(NnError::BadSpec(format!(
                "batch has {bsz} rows but {} labels",
                y.len()
            )));
        }
        for &label in y {
            if usize::from(label) >= self.spec.class_count {
                return Err(NnError::LabelOutOfRange {
                    label,
                    classes: self.spec.class_count,
                });
            }
        }
        let (probs, caches) = self.run_layers(x, true)?;

        // Loss accumulates in f64; a vanished probability is reported with
        // the offending in-batch sample index.
        let mut loss = 0.0f64;
        for (i, (&label, row)) in y.iter().zip(probs.rows()).enumerate() {
            let term = -f64::from(row[usize::from(label)]).ln();
            if !term.is_finite() {
                return Err(NnError::NonFiniteLoss { sample: i });
            }
            loss += term;
        }
        loss /= bsz as f64;

        // Fused softmax + cross-entropy start: gradient with respect to the
        // logits entering the final softmax.
        let mut g_flat = probs;
        for (i, &label) in y.iter().enumerate() {
            g_flat[[i, usize::from(label)]] -= 1.0;
        }
        g_flat.mapv_inplace(|v| v / bsz as f32);

        let mut grads: Vec<LayerState> = vec![LayerState::Stateless; self.spec.layers.len()];
        let mut g = Value::Flat(g_flat);
        for i in (0..self.spec.layers.len() - 1).rev() {
            let cache = &caches[i];
            let input = cache.input.as_ref().expect("cache kept");
            g = match (&self.spec.layers[i], &self.weights[i]) {
                (LayerSpec::Conv1d { stride, .. }, LayerState::Conv { w, .. }) => {
                    let (dx, dw, db) = layers::conv_backward(
                        g.spatial(),
                        cache.col.as_ref().expect("conv cache"),
                        w,
                        *stride,
                        input.spatial().dim(),
                    );
                    grads[i] = LayerState::Conv { w: dw, b: db };
                    Value::Spatial(dx)
                }
                (LayerSpec::Relu, _) => match (&g, input) {
                    (Value::Spatial(gs), Value::Spatial(xs)) => {
                        let mut dx = gs.clone();
                        dx.zip_mut_with(xs, |gv, xv| {
                            if *xv <= 0.0 {
                                *gv = 0.0;
                            }
                        });
                        Value::Spatial(dx)
                    }
                    (Value::Flat(gf), Value::Flat(xf)) => {
                        let mut dx = gf.clone();
                        dx.zip_mut_with(xf, |gv, xv| {
                            if *xv <= 0.0 {
                                *gv = 0.0;
                            }
                        });
                        Value::Flat(dx)
                    }
                    _ => unreachable!("relu preserves value kind"),
                },
                (LayerSpec::MaxPool1d { .. }, _) => Value::Spatial(layers::pool_backward(
                    g.spatial(),
                    cache.argmax.as_ref().expect("pool cache"),
                    input.spatial().dim(),
                )),
                (LayerSpec::AvgPool1d { width }, _) => Value::Spatial(
                    layers::avg_pool_backward(g.spatial(), *width, input.spatial().dim()),
                ),
                (LayerSpec::Flatten, _) => {
                    let (_, ch, len) = input.spatial().dim();
                    Value::Spatial(layers::unflatten3(g.flat(), ch, len))
                }
                (LayerSpec::Dense { .. }, LayerState::Dense { w, .. }) => {
                    let xf = input.flat();
                    let gf = g.flat();
                    grads[i] = LayerState::Dense {
                        w: xf.t().dot(gf),
                        b: gf.sum_axis(Axis(0)),
                    };
                    Value::Flat(gf.dot(&w.t()))
                }
                _ => unreachable!("weights aligned with layers"),
            };
        }
        let dx = match g {
            Value::Spatial(a) => layers::flatten3(&a),
            Value::Flat(_) => unreachable!("model input is spatial"),
        };
        Ok((loss, grads, dx))
    }

    /// Stable fingerprint of architecture + weights + metadata, recomputed
    /// from the serialized image (never stored inside it).
    pub fn id(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.update(&io::to_bytes(self));
        h.finish()
    }

    /// Hex form of [`Model::id`] for file metadata and reports.
    pub fn id_hex(&self) -> String {
        format!("{:016x}", self.id())
    }
}

/// `(B, L)` rows → `(B, 1, L)` single-channel sequences.
fn unflatten_input(x: &Array2<f32>) -> Array3<f32> {
    let (bsz, len) = x.dim();
    let mut out = Array3::zeros((bsz, 1, len));
    for bi in 0..bsz {
        for l in 0..len {
            out[[bi, 0, l]] = x[[bi, l]];
        }
    }
    out
}

pub(crate) fn argmax_rows(probs: &Array2<f32>) -> Vec<u16> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = f32::NEG_INFINITY;
            let mut idx = 0usize;
            for (i, &v) in row.iter().enumerate() {
                if v > best {
                    best = v;
                    idx = i;
                }
            }
            idx as u16
        })
        .collect()
}

/// Applies one SGD step: `θ ← θ − η·∇θ`.
pub(crate) fn apply_sgd(weights: &mut [LayerState], grads: &[LayerState], lr: f32) {
    for (state, grad) in weights.iter_mut().zip(grads) {
        match (state, grad) {
            (LayerState::Conv { w, b }, LayerState::Conv { w: dw, b: db }) => {
                w.scaled_add(-lr, dw);
                b.scaled_add(-lr, db);
            }
            (LayerState::Dense { w, b }, LayerState::Dense { w: dw, b: db }) => {
                w.scaled_add(-lr, dw);
                b.scaled_add(-lr, db);
            }
            (LayerState::Stateless, LayerState::Stateless) => {}
            _ => unreachable!("gradient layout mismatches weights"),
        }
    }
}

/// Zeroes every parameter tensor (testing aid for known-output fixtures).
pub fn zero_weights(model: &mut Model) {
    for state in &mut model.weights {
        match state {
            LayerState::Conv { w, b } => {
                w.fill(0.0);
                b.fill(0.0);
            }
            LayerState::Dense { w, b } => {
                w.fill(0.0);
                b.fill(0.0);
            }
            LayerState::Stateless => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_dense_spec(len: usize, k: usize) -> ModelSpec {
        ModelSpec {
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 8 },
                LayerSpec::Relu,
                LayerSpec::Dense { units: k },
                LayerSpec::Softmax,
            ],
            input_length: len,
            class_count: k,
            family: ArchFamily::Sae,
        }
    }

    fn random_batch(rng: &mut ChaCha8Rng, bsz: usize, len: usize) -> Array2<f32> {
        Array2::from_shape_fn((bsz, len), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn default_specs_validate_for_typical_lengths() {
        for len in [1500usize, 2560, 100, 99, 64, 63] {
            default_cnn(len, 4).validate().unwrap();
            default_sae(len, 4).validate().unwrap();
        }
    }

    #[test]
    fn validation_rejects_malformed_chains() {
        let mut no_softmax = default_sae(16, 2);
        no_softmax.layers.pop();
        assert!(matches!(no_softmax.validate(), Err(NnError::BadSpec(_))));

        let mut sae_with_conv = default_sae(16, 2);
        sae_with_conv
            .layers
            .insert(0, LayerSpec::Conv1d { filters: 2, kernel: 3, stride: 1 });
        assert!(matches!(sae_with_conv.validate(), Err(NnError::BadSpec(_))));

        let dense_on_spatial = ModelSpec {
            layers: vec![LayerSpec::Dense { units: 2 }, LayerSpec::Softmax],
            input_length: 16,
            class_count: 2,
            family: ArchFamily::Cnn1d,
        };
        assert!(matches!(dense_on_spatial.validate(), Err(NnError::BadSpec(_))));

        let wrong_output = ModelSpec {
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { units: 3 }, LayerSpec::Softmax],
            input_length: 16,
            class_count: 2,
            family: ArchFamily::Sae,
        };
        assert!(matches!(wrong_output.validate(), Err(NnError::BadSpec(_))));

        let mut kernel_too_wide = default_cnn(5, 2);
        kernel_too_wide.input_length = 5;
        assert!(matches!(kernel_too_wide.validate(), Err(NnError::BadSpec(_))));
    }

    #[test]
    fn zeroed_model_outputs_uniform_probabilities() {
        let k = 5;
        let mut model = Model::new(
            toy_dense_spec(12, k),
            crate::features::EncodingKind::pc_p(),
            (0..k).map(|i| format!("c{i}")).collect(),
            None,
            3,
        )
        .unwrap();
        zero_weights(&mut model);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let probs = model.forward(&random_batch(&mut rng, 4, 12)).unwrap();
        for row in probs.rows() {
            for &p in row {
                assert!((p - 1.0 / k as f32).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one_on_random_inputs() {
        let model = Model::new(
            default_cnn(64, 3),
            crate::features::EncodingKind::pc_p(),
            vec!["a".into(), "b".into(), "c".into()],
            None,
            9,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = random_batch(&mut rng, 1, 64);
            let probs = model.forward(&x).unwrap();
            let sum: f32 = probs.row(0).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn argmax_is_invariant_to_uniform_logit_shift() {
        let spec = toy_dense_spec(10, 4);
        let mut model = Model::new(
            spec,
            crate::features::EncodingKind::pc_p(),
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            None,
            17,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_batch(&mut rng, 16, 10);
        let before = model.predict(&x).unwrap();
        // Shifting every logit by the same constant = adding it to the
        // final dense bias.
        if let LayerState::Dense { b, .. } = &mut model.weights[3] {
            b.mapv_inplace(|v| v + 7.5);
        } else {
            panic!("layer 3 should be the final dense layer");
        }
        assert_eq!(model.predict(&x).unwrap(), before);
    }

    #[test]
    fn duplicated_batch_rows_get_identical_input_gradients() {
        let model = Model::new(
            default_cnn(64, 3),
            crate::features::EncodingKind::pc_p(),
            vec!["a".into(), "b".into(), "c".into()],
            None,
            5,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let row = random_batch(&mut rng, 1, 64);
        let mut x = Array2::zeros((3, 64));
        for i in 0..3 {
            x.row_mut(i).assign(&row.row(0));
        }
        let (loss, _, dx) = model.loss_and_grads(&x, &[1, 1, 1]).unwrap();
        assert!(loss >= 0.0);
        for i in 1..3 {
            assert_eq!(dx.row(0), dx.row(i));
        }
    }

    #[test]
    fn loss_is_nonnegative_on_random_batches() {
        let model = Model::new(
            default_cnn(48, 4),
            crate::features::EncodingKind::pc_p(),
            (0..4).map(|i| format!("c{i}")).collect(),
            None,
            6,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let x = random_batch(&mut rng, 5, 48);
            let y: Vec<u16> = (0..5).map(|_| rng.gen_range(0..4)).collect();
            let (loss, _, _) = model.loss_and_grads(&x, &y).unwrap();
            assert!(loss >= 0.0);
        }
    }

    #[test]
    fn vanished_probability_reports_the_sample_index() {
        let mut model = Model::new(
            toy_dense_spec(4, 2),
            crate::features::EncodingKind::pc_p(),
            vec!["a".into(), "b".into()],
            None,
            8,
        )
        .unwrap();
        // Enormous weights drive one class's probability to exactly 0 in f32.
        for state in &mut model.weights {
            if let LayerState::Dense { w, .. } = state {
                w.mapv_inplace(|v| v * 1e6);
            }
        }
        let mut x = Array2::zeros((2, 4));
        x.row_mut(1).fill(1000.0);
        let second_try = model.loss_and_grads(&x, &[0, 0]);
        match second_try {
            Err(NnError::NonFiniteLoss { sample }) => assert_eq!(sample, 1),
            other => panic!("expected non-finite loss error, got {other:?}"),
        }
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let model = Model::new(
            toy_dense_spec(10, 2),
            crate::features::EncodingKind::pc_p(),
            vec!["a".into(), "b".into()],
            None,
            1,
        )
        .unwrap();
        let x = Array2::zeros((1, 11));
        assert!(matches!(
            model.forward(&x),
            Err(NnError::ShapeMismatch { expected: 10, got: 11 })
        ));
    }

    #[test]
    fn model_id_tracks_weights_and_spec() {
        let mk = |seed| {
            Model::new(
                toy_dense_spec(6, 2),
                crate::features::EncodingKind::pc_p(),
                vec!["a".into(), "b".into()],
                None,
                seed,
            )
            .unwrap()
        };
        let a = mk(1);
        let b = mk(1);
        let c = mk(2);
        assert_eq!(a.id(), b.id());
        assert_ne!(a.id(), c.id());
        assert_eq!(a.id_hex().len(), 16);
    }
}

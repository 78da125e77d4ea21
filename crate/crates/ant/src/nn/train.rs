//! Seeded SGD training with validation-based weight selection, plus
//! confusion-matrix metrics.

use super::{apply_sgd, Model, ModelSpec, NnError};
use crate::features::{EncodedSample, EncodingKind, NormStats};
use crate::ingest::SplitDataset;
use crate::seed::subseed;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use rand_chacha::ChaCha8Rng;

/// SGD hyperparameters. `patience` is the number of consecutive epochs
/// without a validation-accuracy improvement tolerated before stopping
/// early; `None` disables early stopping.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub seed: u64,
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
            seed: 0,
            patience: Some(10),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.epochs == 0 {
            return Err(NnError::BadConfig("epochs must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::BadConfig("batch_size must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(NnError::BadConfig("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Stacks encoded samples into a row matrix + label vector, checking that
/// every sample matches the expected encoding and length.
pub fn stack_samples(
    samples: &[EncodedSample],
    encoding: &EncodingKind,
    input_length: usize,
    class_count: usize,
) -> Result<(Array2<f32>, Vec<u16>), NnError> {
    let mut x = Array2::zeros((samples.len(), input_length));
    let mut y = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if &s.kind != encoding {
            return Err(NnError::EncodingMismatch {
                expected: encoding.name().into(),
                got: s.kind.name().into(),
            });
        }
        if s.values.len() != input_length {
            return Err(NnError::ShapeMismatch { expected: input_length, got: s.values.len() });
        }
        if usize::from(s.label) >= class_count {
            return Err(NnError::LabelOutOfRange { label: s.label, classes: class_count });
        }
        for (j, &v) in s.values.iter().enumerate() {
            x[[i, j]] = v;
        }
        y.push(s.label);
    }
    Ok((x, y))
}

fn accuracy(model: &Model, x: &Array2<f32>, y: &[u16]) -> Result<f64, NnError> {
    let mut correct = 0usize;
    for (rows, labels) in batch_chunks(x, y, 256) {
        let pred = model.predict(&rows)?;
        correct += pred.iter().zip(labels).filter(|(p, t)| p == t).count();
    }
    Ok(correct as f64 / y.len() as f64)
}

/// Yields owned row-chunks so inference never materializes the whole set's
/// activations at once.
fn batch_chunks<'a>(
    x: &'a Array2<f32>,
    y: &'a [u16],
    size: usize,
) -> impl Iterator<Item = (Array2<f32>, &'a [u16])> + 'a {
    let n = x.dim().0;
    (0..n.div_ceil(size)).map(move |c| {
        let lo = c * size;
        let hi = (lo + size).min(n);
        (x.slice(ndarray::s![lo..hi, ..]).to_owned(), &y[lo..hi])
    })
}

/// Trains with shuffled mini-batch SGD and returns the weights of the
/// epoch with the best validation accuracy. Fully deterministic given the
/// config seed.
pub fn train(
    spec: &ModelSpec,
    encoding: EncodingKind,
    labels: Vec<String>,
    norm_stats: Option<NormStats>,
    data: &SplitDataset<EncodedSample>,
    config: &TrainConfig,
) -> Result<Model, NnError> {
    config.validate()?;
    spec.validate()?;
    if data.train.is_empty() {
        return Err(NnError::EmptyData("training split has no samples".into()));
    }
    if data.validation.is_empty() {
        return Err(NnError::EmptyData(
            "validation split has no samples (needed for weight selection)".into(),
        ));
    }
    let (train_x, train_y) =
        stack_samples(&data.train, &encoding, spec.input_length, spec.class_count)?;
    let (val_x, val_y) =
        stack_samples(&data.validation, &encoding, spec.input_length, spec.class_count)?;

    let mut model = Model::new(spec.clone(), encoding, labels, norm_stats, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, "train/shuffle"));
    let n = train_y.len();
    let mut order: Vec<usize> = (0..n).collect();

    let mut best_weights = model.weights.clone();
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut epochs_since_best = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let mut x = Array2::zeros((batch.len(), spec.input_length));
            let mut y = Vec::with_capacity(batch.len());
            for (row, &src) in batch.iter().enumerate() {
                x.row_mut(row).assign(&train_x.row(src));
                y.push(train_y[src]);
            }
            let (_, grads, _) = model.loss_and_grads(&x, &y).map_err(|e| match e {
                NnError::NonFiniteLoss { sample } => {
                    NnError::Diverged { epoch, batch: batch_idx, sample }
                }
                other => other,
            })?;
            apply_sgd(&mut model.weights, &grads, config.learning_rate);
        }
        let acc = accuracy(&model, &val_x, &val_y)?;
        if acc > best_accuracy {
            best_accuracy = acc;
            best_weights = model.weights.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if let Some(patience) = config.patience {
                if epochs_since_best > patience {
                    break;
                }
            }
        }
    }
    model.weights = best_weights;
    Ok(model)
}

// --- metrics ---------------------------------------------------------------

/// Per-class confusion-matrix metrics. When a class is never predicted its
/// precision is undefined; it is reported as 0 with the flag set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: u16,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    /// True samples of this class in the scored set.
    pub support: usize,
    /// Predictions that named this class.
    pub predicted: usize,
    pub undefined_precision: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub per_class: Vec<ClassMetrics>,
    /// Micro accuracy: Σ TPᵢ / N.
    pub accuracy: f64,
    /// `confusion[true_class][predicted_class]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalMetrics {
    /// Recall of one class (0 when the class has no support).
    pub fn recall(&self, label: u16) -> f64 {
        self.per_class
            .get(usize::from(label))
            .map(|c| c.recall)
            .unwrap_or(0.0)
    }
}

/// Builds metrics from parallel truth/prediction vectors over
/// `class_count` classes.
pub fn metrics_from_predictions(truth: &[u16], predictions: &[u16], class_count: usize) -> EvalMetrics {
    assert_eq!(truth.len(), predictions.len(), "truth/prediction length mismatch");
    let mut confusion = vec![vec![0usize; class_count]; class_count];
    for (&t, &p) in truth.iter().zip(predictions) {
        confusion[usize::from(t)][usize::from(p)] += 1;
    }
    let mut per_class = Vec::with_capacity(class_count);
    let mut correct = 0usize;
    for c in 0..class_count {
        let tp = confusion[c][c];
        correct += tp;
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = (0..class_count).map(|t| confusion[t][c]).sum();
        let recall = if support > 0 { tp as f64 / support as f64 } else { 0.0 };
        let undefined_precision = predicted == 0;
        let precision = if predicted > 0 { tp as f64 / predicted as f64 } else { 0.0 };
        let fscore = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            label: c as u16,
            precision,
            recall,
            fscore,
            support,
            predicted,
            undefined_precision,
        });
    }
    let accuracy = if truth.is_empty() { 0.0 } else { correct as f64 / truth.len() as f64 };
    EvalMetrics { per_class, accuracy, confusion }
}

/// Scores a model on encoded samples.
pub fn evaluate(model: &Model, samples: &[EncodedSample]) -> Result<EvalMetrics, NnError> {
    if samples.is_empty() {
        return Err(NnError::EmptyData("evaluate called with no samples".into()));
    }
    let (x, y) = stack_samples(
        samples,
        &model.encoding,
        model.spec.input_length,
        model.spec.class_count,
    )?;
    let mut predictions = Vec::with_capacity(y.len());
    for (rows, _) in batch_chunks(&x, &y, 256) {
        predictions.extend(model.predict(&rows)?);
    }
    Ok(metrics_from_predictions(&y, &predictions, model.spec.class_count))
}

/// Predicts labels for raw feature rows in memory-bounded chunks.
pub fn predict_rows(model: &Model, x: &Array2<f32>) -> Result<Vec<u16>, NnError> {
    let y = vec![0u16; x.dim().0];
    let mut predictions = Vec::with_capacity(y.len());
    for (rows, _) in batch_chunks(x, &y, 256) {
        predictions.extend(model.predict(&rows)?);
    }
    Ok(predictions)
}

//! Per-class linear compatibility models and the seen-class base trainer.
//!
//! A [`CompatibilityModel`] scores a feature vector against every class with
//! one dot product per class; prediction is the argmax. The base trainer
//! learns a bilinear map `V` from attribute space to feature space by
//! minimizing cross-entropy over the seen classes, then materializes a weight
//! row for EVERY class (seen and unseen) from the attribute table, so the
//! initial model can already emit unseen-class predictions.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{argmax, dot, Matrix};
use crate::optim::{adam_step, AdamState};
use crate::rng;

/// Container format version of model checkpoint files.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Per-class attribute vectors.
///
/// Keeps the rows exactly as ingested (`raw`, what dataset files round-trip)
/// plus an L2-normalized copy (`unit`) that all modeling paths consume, so
/// attribute scale differences between datasets do not change effective
/// learning rates.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    raw: Matrix,
    unit: Matrix,
}

impl AttributeTable {
    pub fn from_rows(raw: Matrix) -> Self {
        let mut unit = raw.clone();
        for r in 0..unit.rows() {
            let row = unit.row_mut(r);
            let norm = dot(row, row).sqrt();
            if norm > 0.0 {
                for v in row.iter_mut() {
                    *v /= norm;
                }
            }
        }
        AttributeTable { raw, unit }
    }

    pub fn num_classes(&self) -> usize {
        self.raw.rows()
    }

    pub fn attr_dim(&self) -> usize {
        self.raw.cols()
    }

    /// Rows as ingested, at file precision.
    pub fn raw(&self) -> &Matrix {
        &self.raw
    }

    /// L2-normalized row for one class.
    pub fn unit_row(&self, class: usize) -> &[f64] {
        self.unit.row(class)
    }
}

/// Linear compatibility model: one weight row per class in the global label
/// set, score = row . x.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityModel {
    weights: Matrix,
}

impl CompatibilityModel {
    pub fn new(weights: Matrix) -> Self {
        CompatibilityModel { weights }
    }

    pub fn class_count(&self) -> usize {
        self.weights.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    /// Per-class compatibility scores for one feature vector.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.weights.matvec(x)
    }

    /// Highest-compatibility class (ties break to the lowest class index)
    /// together with the full score vector.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let scores = self.scores(x)?;
        Ok((argmax(&scores), scores))
    }

    /// Writes the checkpoint container: a single JSON header line holding
    /// `format_version`, `class_count` and `feature_dim`, followed by the
    /// weight matrix as little-endian 64-bit floats, row-major.
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = CheckpointMeta {
            format_version: MODEL_FORMAT_VERSION,
            class_count: self.class_count(),
            feature_dim: self.feature_dim(),
        };
        let mut bytes = serde_json::to_vec(&meta).expect("checkpoint meta serializes");
        bytes.push(b'\n');
        for v in self.weights.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format("checkpoint", "missing header line"))?;
        let meta: CheckpointMeta = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| Error::format("checkpoint", format!("bad header: {e}")))?;
        if meta.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::format(
                "format_version",
                format!(
                    "checkpoint is version {}, expected {MODEL_FORMAT_VERSION}",
                    meta.format_version
                ),
            ));
        }
        let payload = &bytes[newline + 1..];
        let expected = meta.class_count * meta.feature_dim * 8;
        if payload.len() != expected {
            return Err(Error::format(
                "checkpoint",
                format!(
                    "weight payload holds {} bytes, expected class_count ({}) x feature_dim ({}) x 8 = {expected}",
                    payload.len(),
                    meta.class_count,
                    meta.feature_dim
                ),
            ));
        }
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let weights = Matrix::new(meta.class_count, meta.feature_dim, data)?;
        Ok(CompatibilityModel::new(weights))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    format_version: u32,
    class_count: usize,
    feature_dim: usize,
}

/// Base training hyperparameters. Defaults were tuned on synthetic data only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseTrainConfig {
    pub epochs: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for BaseTrainConfig {
    fn default() -> Self {
        BaseTrainConfig {
            epochs: 30,
            minibatch: 256,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl BaseTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.minibatch == 0 {
            return Err(Error::InvalidArgument("minibatch must be >= 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument(
                "learning_rate must be positive".into(),
            ));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidArgument(
                "weight_decay must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Result of base training.
#[derive(Debug, Clone)]
pub struct BaseTrainOutcome {
    pub model: CompatibilityModel,
    /// Training accuracy of the final model on the base set, argmax taken
    /// over the seen classes that had at least one sample.
    pub seen_train_accuracy: f64,
    /// Seen classes with zero base samples, excluded from the CE softmax.
    pub skipped_classes: Vec<usize>,
}

/// Trains the bilinear base model on seen-class data.
///
/// Learns `V` (attr_dim x feature_dim) by seeded minibatch Adam on the
/// cross-entropy of `softmax_y(a_y . (V x))` over seen classes with coupled
/// L2 weight decay, then returns weight rows `a_y V` for every class in the
/// global label set.
pub fn train_base(
    features: &Matrix,
    labels: &[usize],
    seen_classes: &[usize],
    attributes: &AttributeTable,
    config: &BaseTrainConfig,
) -> Result<BaseTrainOutcome> {
    config.validate()?;
    let n = features.rows();
    let d_x = features.cols();
    let d_a = attributes.attr_dim();
    let num_classes = attributes.num_classes();
    if labels.len() != n {
        return Err(Error::shape(
            "train_base",
            format!("{n} labels"),
            format!("{}", labels.len()),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("base set is empty".into()));
    }
    let mut is_seen = vec![false; num_classes];
    for &c in seen_classes {
        if c >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "seen class {c} out of range for {num_classes} classes"
            )));
        }
        is_seen[c] = true;
    }
    let mut counts = vec![0usize; num_classes];
    for &y in labels {
        if y >= num_classes || !is_seen[y] {
            return Err(Error::Protocol(format!(
                "base sample labeled {y}, which is not a seen class"
            )));
        }
        counts[y] += 1;
    }
    // Seen classes without samples cannot appear in the CE normalization.
    let active: Vec<usize> = seen_classes
        .iter()
        .copied()
        .filter(|&c| counts[c] > 0)
        .collect();
    let skipped: Vec<usize> = seen_classes
        .iter()
        .copied()
        .filter(|&c| counts[c] == 0)
        .collect();

    let mut v = Matrix::zeros(d_a, d_x);
    let mut adam = AdamState::new(d_a, d_x, config.learning_rate)?;
    let mut rng = rng::stream(config.seed);
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..config.epochs {
        rng::shuffle(&mut rng, &mut order);
        for chunk in order.chunks(config.minibatch) {
            let mut grad = Matrix::zeros(d_a, d_x);
            for &i in chunk {
                let x = features.row(i);
                // h = V x, then s_y = a_y . h over the active seen classes.
                let h = v.matvec(x)?;
                let scores: Vec<f64> = active
                    .iter()
                    .map(|&y| dot(attributes.unit_row(y), h.as_slice()))
                    .collect();
                let probs = crate::loss::full_softmax(&scores);
                // d ce / dV = (sum_y coef_y a_y) x^T
                let mut coef_attr = vec![0.0; d_a];
                for (k, &y) in active.iter().enumerate() {
                    let indicator = if y == labels[i] { 1.0 } else { 0.0 };
                    let coef = probs[k] - indicator;
                    for (ca, &av) in coef_attr.iter_mut().zip(attributes.unit_row(y)) {
                        *ca += coef * av;
                    }
                }
                for (t, &ca) in coef_attr.iter().enumerate() {
                    let row = grad.row_mut(t);
                    for (j, &xj) in x.iter().enumerate() {
                        row[j] += ca * xj;
                    }
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            let wd = config.weight_decay;
            for (g, p) in grad.as_mut_slice().iter_mut().zip(v.as_slice()) {
                *g = *g * scale + wd * p;
            }
            adam_step(&mut v, &grad, &mut adam)?;
        }
    }

    // Materialize one weight row per class in the global label set.
    let mut w = Matrix::zeros(num_classes, d_x);
    for y in 0..num_classes {
        let a = attributes.unit_row(y);
        let row = w.row_mut(y);
        for (j, rj) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, &at) in a.iter().enumerate() {
                acc += at * v.get(t, j);
            }
            *rj = acc;
        }
    }
    let model = CompatibilityModel::new(w);

    let mut hits = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let scores = model.scores(features.row(i))?;
        let restricted: Vec<f64> = active.iter().map(|&y| scores[y]).collect();
        if active[argmax(&restricted)] == label {
            hits += 1;
        }
    }
    Ok(BaseTrainOutcome {
        model,
        seen_train_accuracy: hits as f64 / n as f64,
        skipped_classes: skipped,
    })
}

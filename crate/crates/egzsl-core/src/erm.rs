//! Plain pseudo-label self-training baseline.
//!
//! Deliberately coded straight-line and independently of the evolver: its own
//! scoring loop, its own softmax, its own cross-entropy gradient, its own
//! Adam. It serves as the reference the three-flag ablation configuration of
//! [`crate::evolver::evolve_step`] is checked against (the two must produce
//! identical numbers), and as the degradation baseline in experiments. No
//! momentum model, no class selection, no data selection: every sample
//! trains, with cross-entropy over the full label set.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::CompatibilityModel;

const PROB_FLOOR: f64 = 1e-30;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ErmState {
    pub model: CompatibilityModel,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    learning_rate: f64,
    pub time_step: usize,
}

#[derive(Debug, Clone)]
pub struct ErmStageOutcome {
    pub predictions: Vec<usize>,
    pub ce_loss: f64,
}

pub fn erm_init(base: &CompatibilityModel, learning_rate: f64) -> Result<ErmState> {
    if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be nonnegative and finite, got {learning_rate}"
        )));
    }
    let len = base.class_count() * base.feature_dim();
    Ok(ErmState {
        model: base.clone(),
        first_moment: vec![0.0; len],
        second_moment: vec![0.0; len],
        step_count: 0,
        learning_rate,
        time_step: 0,
    })
}

/// One stage: pseudo-label with the current weights, then `epochs` full-batch
/// Adam steps on the mean cross-entropy against those pseudo-labels.
pub fn erm_step(state: &mut ErmState, batch: &Matrix, epochs: usize) -> Result<ErmStageOutcome> {
    if batch.rows() == 0 {
        return Err(Error::InvalidArgument("empty stage batch".into()));
    }
    if batch.cols() != state.model.feature_dim() {
        return Err(Error::shape(
            "erm_step",
            format!("feature dim {}", state.model.feature_dim()),
            format!("{}", batch.cols()),
        ));
    }
    let n = batch.rows();
    let classes = state.model.class_count();
    let dim = batch.cols();

    // Pseudo-label once with the pre-update weights.
    let mut predictions = Vec::with_capacity(n);
    for i in 0..n {
        let scores = raw_scores(state.model.weights(), batch.row(i), classes, dim);
        let mut best = 0;
        for y in 1..classes {
            if scores[y] > scores[best] {
                best = y;
            }
        }
        predictions.push(best);
    }

    let nf = n as f64;
    let mut first_epoch_loss = 0.0;
    for epoch in 0..epochs {
        let mut grad = vec![0.0; classes * dim];
        let mut ce_sum = 0.0;
        for i in 0..n {
            let x = batch.row(i);
            let scores = raw_scores(state.model.weights(), x, classes, dim);
            let probs = raw_softmax(&scores);
            for y in 0..classes {
                let indicator = if y == predictions[i] { 1.0 } else { 0.0 };
                let coef = probs[y] - indicator;
                for j in 0..dim {
                    grad[y * dim + j] += coef * x[j];
                }
            }
            ce_sum += -probs[predictions[i]].max(PROB_FLOOR).ln();
        }
        for g in grad.iter_mut() {
            *g /= nf;
        }
        if epoch == 0 {
            first_epoch_loss = ce_sum / nf;
        }

        // Own Adam, bias-corrected, skipping all-zero weight rows.
        state.step_count += 1;
        let bias1 = 1.0 - BETA1.powi(state.step_count as i32);
        let bias2 = 1.0 - BETA2.powi(state.step_count as i32);
        let lr = state.learning_rate;
        let weights = state.model.weights_mut().as_mut_slice();
        for y in 0..classes {
            if grad[y * dim..(y + 1) * dim].iter().all(|&g| g == 0.0) {
                continue;
            }
            for j in 0..dim {
                let e = y * dim + j;
                let g = grad[e];
                state.first_moment[e] = BETA1 * state.first_moment[e] + (1.0 - BETA1) * g;
                state.second_moment[e] = BETA2 * state.second_moment[e] + (1.0 - BETA2) * (g * g);
                let m_hat = state.first_moment[e] / bias1;
                let v_hat = state.second_moment[e] / bias2;
                weights[e] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }

    state.time_step += 1;
    Ok(ErmStageOutcome {
        predictions,
        ce_loss: first_epoch_loss,
    })
}

fn raw_scores(weights: &Matrix, x: &[f64], classes: usize, dim: usize) -> Vec<f64> {
    let w = weights.as_slice();
    let mut scores = vec![0.0; classes];
    for y in 0..classes {
        let mut acc = 0.0;
        for j in 0..dim {
            acc += w[y * dim + j] * x[j];
        }
        scores[y] = acc;
    }
    scores
}

fn raw_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

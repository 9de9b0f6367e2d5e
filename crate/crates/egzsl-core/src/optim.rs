//! Bias-corrected Adam over matrix parameters.
//!
//! One deliberate deviation from the textbook dense update: weight rows whose
//! gradient is entirely zero are skipped — parameters AND moments stay
//! untouched. Per-class weight rows that receive no gradient in a stage (the
//! class was not selected) must not drift on stale momentum alone, and a zero
//! gradient is always a no-op on the parameters regardless of optimizer
//! history.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Matrix,
    second_moment: Matrix,
    step_count: u64,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    /// Fresh state for a `rows x cols` parameter matrix with default betas.
    pub fn new(rows: usize, cols: usize, learning_rate: f64) -> Result<Self> {
        Self::with_hyperparams(
            rows,
            cols,
            learning_rate,
            DEFAULT_BETA1,
            DEFAULT_BETA2,
            DEFAULT_EPSILON,
        )
    }

    pub fn with_hyperparams(
        rows: usize,
        cols: usize,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<Self> {
        // Zero is allowed: it freezes the parameters while the rest of a run
        // (masking, statistics, EMA bookkeeping) proceeds normally.
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be nonnegative and finite, got {learning_rate}"
            )));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(AdamState {
            first_moment: Matrix::zeros(rows, cols),
            second_moment: Matrix::zeros(rows, cols),
            step_count: 0,
            learning_rate,
            beta1,
            beta2,
            epsilon,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn first_moment(&self) -> &Matrix {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &Matrix {
        &self.second_moment
    }
}

/// One Adam step in place. Non-finite gradient entries are rejected before
/// anything mutates, so the state is unchanged on error.
pub fn adam_step(params: &mut Matrix, grad: &Matrix, state: &mut AdamState) -> Result<()> {
    if !params.same_shape(grad) || !params.same_shape(&state.first_moment) {
        return Err(Error::shape(
            "adam_step",
            format!("{}x{}", params.rows(), params.cols()),
            format!(
                "grad {}x{}, moments {}x{}",
                grad.rows(),
                grad.cols(),
                state.first_moment.rows(),
                state.first_moment.cols()
            ),
        ));
    }
    if !grad.as_slice().iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }

    state.step_count += 1;
    let bias1 = 1.0 - state.beta1.powi(state.step_count as i32);
    let bias2 = 1.0 - state.beta2.powi(state.step_count as i32);
    let (b1, b2) = (state.beta1, state.beta2);
    let (lr, eps) = (state.learning_rate, state.epsilon);

    for r in 0..params.rows() {
        if grad.row(r).iter().all(|&g| g == 0.0) {
            continue;
        }
        let g_row = grad.row(r);
        let p_row = params.row_mut(r);
        let m_row = state.first_moment.row_mut(r);
        let v_row = state.second_moment.row_mut(r);
        for j in 0..g_row.len() {
            let g = g_row[j];
            m_row[j] = b1 * m_row[j] + (1.0 - b1) * g;
            v_row[j] = b2 * v_row[j] + (1.0 - b2) * (g * g);
            let m_hat = m_row[j] / bias1;
            let v_hat = v_row[j] / bias2;
            p_row[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

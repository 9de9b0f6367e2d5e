//! The per-stage predict-then-adapt engine.
//!
//! Each stage of unlabeled test data is processed in a fixed order: the
//! previous model pseudo-labels the stage, the label space is restricted to
//! the classes actually present, per-class confidence statistics are momentum
//! updated, a confidence mask selects the training samples, one optimizer
//! step follows on the masked cross-entropy plus momentum-model distillation
//! objective, and finally the momentum model absorbs the new weights. The
//! step never sees a label: its only input is a feature batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::loss::{kl_distill_grad, selective_ce_grad};
use crate::model::CompatibilityModel;
use crate::optim::{adam_step, AdamState};

/// Default fixed threshold for the adaptive-to-fixed ablation.
pub const DEFAULT_FIXED_THRESHOLD: f64 = 0.8;

/// Evolution hyperparameters.
///
/// `lambda` weighs the distillation loss, `tau` is the base confidence
/// threshold, `ema_momentum` smooths the momentum model, and
/// `confidence_momentum` smooths the per-class confidence statistics.
/// `use_pre_update_confidence` switches the data mask to the confidence
/// values from before this stage's statistics update (sensitivity studies
/// only; the default follows the canonical step order).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolverConfig {
    pub lambda: f64,
    pub tau: f64,
    pub ema_momentum: f64,
    pub confidence_momentum: f64,
    pub learning_rate: f64,
    pub epochs_per_stage: usize,
    pub use_pre_update_confidence: bool,
}

impl Default for EvolverConfig {
    fn default() -> Self {
        EvolverConfig {
            lambda: 1.0,
            tau: 0.5,
            ema_momentum: 0.99,
            confidence_momentum: 0.9,
            learning_rate: 5e-5,
            epochs_per_stage: 1,
            use_pre_update_confidence: false,
        }
    }
}

impl EvolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        for (name, m) in [("m1", self.ema_momentum), ("m2", self.confidence_momentum)] {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in [0, 1), got {m}"
                )));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(
                "learning_rate must be nonnegative".into(),
            ));
        }
        if self.epochs_per_stage == 0 {
            return Err(Error::InvalidArgument(
                "epochs_per_stage must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Component switches for the ablation baselines.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AblationFlags {
    /// Drop the distillation term and mirror the current weights wherever the
    /// momentum model would be used.
    pub disable_momentum_model: bool,
    /// Cross-entropy over the full label set instead of the selected classes.
    pub disable_class_selection: bool,
    /// Train on every sample (no confidence statistics, all-ones mask).
    pub disable_data_selection: bool,
    /// Replace the adaptive per-class threshold with this fixed one.
    pub fixed_threshold: Option<f64>,
}

impl AblationFlags {
    /// The plain pseudo-label baseline: all three mechanisms off.
    pub fn erm() -> Self {
        AblationFlags {
            disable_momentum_model: true,
            disable_class_selection: true,
            disable_data_selection: true,
            fixed_threshold: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.disable_data_selection && self.fixed_threshold.is_some() {
            return Err(Error::InvalidArgument(
                "fixed_threshold cannot be combined with disabled data selection".into(),
            ));
        }
        if let Some(t) = self.fixed_threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "fixed threshold must lie in (0, 1], got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Momentum-tracked mean confidence per class.
///
/// Entries start at 1.0 (the most conservative value: the adaptive rule is
/// never looser than the fixed rule before any statistics exist) and stay in
/// (0, 1] because every update is a convex combination with a softmax
/// maximum. Classes never pseudo-labeled keep their initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassConfidence {
    delta_ema: Vec<f64>,
    touched: Vec<bool>,
}

impl ClassConfidence {
    pub fn new(num_classes: usize) -> Self {
        ClassConfidence {
            delta_ema: vec![1.0; num_classes],
            touched: vec![false; num_classes],
        }
    }

    pub fn value(&self, class: usize) -> f64 {
        self.delta_ema[class]
    }

    pub fn values(&self) -> &[f64] {
        &self.delta_ema
    }

    /// Whether the class has ever received a batch statistic.
    pub fn is_initialized(&self, class: usize) -> bool {
        self.touched[class]
    }
}

/// Pseudo-labels plus the full-label-set softmax rows they came from.
#[derive(Debug, Clone)]
pub struct PseudoLabels {
    pub labels: Vec<usize>,
    /// One softmax row per sample over the full label set.
    pub probabilities: Matrix,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StageLosses {
    pub selective_ce: f64,
    pub distillation: f64,
    pub total: f64,
}

/// Everything one stage produced, recorded before any parameter update.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    /// Predictions of the pre-update model; by construction these are also
    /// the pseudo-labels used for training.
    pub predictions: Vec<usize>,
    pub selected_classes: Vec<usize>,
    pub mask: Vec<bool>,
    pub losses: StageLosses,
}

impl StageOutcome {
    pub fn pseudo_labels(&self) -> &[usize] {
        &self.predictions
    }
}

/// State threaded through one evolution run.
#[derive(Debug, Clone)]
pub struct EvolverState {
    pub current: CompatibilityModel,
    pub ema: CompatibilityModel,
    pub confidence: ClassConfidence,
    adam: AdamState,
    pub config: EvolverConfig,
    pub flags: AblationFlags,
    pub time_step: usize,
}

impl EvolverState {
    pub fn adam(&self) -> &AdamState {
        &self.adam
    }
}

/// Fresh state: momentum model cloned from the base model, confidence at 1.0
/// for every class, fresh optimizer moments, time step 0.
pub fn init_state(
    base: &CompatibilityModel,
    config: EvolverConfig,
    flags: AblationFlags,
) -> Result<EvolverState> {
    config.validate()?;
    flags.validate()?;
    let adam = AdamState::new(base.class_count(), base.feature_dim(), config.learning_rate)?;
    Ok(EvolverState {
        current: base.clone(),
        ema: base.clone(),
        confidence: ClassConfidence::new(base.class_count()),
        adam,
        config,
        flags,
        time_step: 0,
    })
}

/// Argmax labels over the full label set plus the softmax rows behind them.
pub fn pseudo_label_batch(model: &CompatibilityModel, batch: &Matrix) -> Result<PseudoLabels> {
    if batch.rows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let num_classes = model.class_count();
    let mut labels = Vec::with_capacity(batch.rows());
    let mut probabilities = Matrix::zeros(batch.rows(), num_classes);
    for i in 0..batch.rows() {
        let (label, scores) = model.predict(batch.row(i))?;
        labels.push(label);
        let probs = crate::loss::full_softmax(&scores);
        probabilities.row_mut(i).copy_from_slice(&probs);
    }
    Ok(PseudoLabels {
        labels,
        probabilities,
    })
}

/// Sorted unique pseudo-labels: the classes eligible for an update.
pub fn select_classes(pseudo_labels: &[usize]) -> Vec<usize> {
    let mut classes: Vec<usize> = pseudo_labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
}

/// Momentum update of the per-class confidence statistics from one stage's
/// pseudo-labels and their previous-model probabilities. Classes absent from
/// the stage are untouched.
pub fn update_confidence(
    confidence: &mut ClassConfidence,
    pseudo_labels: &[usize],
    probabilities: &Matrix,
    momentum: f64,
) {
    let num_classes = confidence.delta_ema.len();
    let mut sums = vec![0.0; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (i, &y) in pseudo_labels.iter().enumerate() {
        sums[y] += probabilities.get(i, y);
        counts[y] += 1;
    }
    for y in 0..num_classes {
        if counts[y] > 0 {
            let batch_mean = sums[y] / counts[y] as f64;
            confidence.delta_ema[y] =
                momentum * confidence.delta_ema[y] + (1.0 - momentum) * batch_mean;
            confidence.touched[y] = true;
        }
    }
}

/// Adaptive data mask: keep a sample iff its pseudo-label confidence exceeds
/// the class confidence scaled by `tau`.
pub fn data_mask(
    pseudo_labels: &[usize],
    probabilities: &Matrix,
    confidence: &ClassConfidence,
    tau: f64,
) -> Vec<bool> {
    pseudo_labels
        .iter()
        .enumerate()
        .map(|(i, &y)| probabilities.get(i, y) > confidence.value(y) * tau)
        .collect()
}

/// Fixed-threshold mask (the ablation variant of [`data_mask`]).
pub fn fixed_threshold_mask(
    pseudo_labels: &[usize],
    probabilities: &Matrix,
    threshold: f64,
) -> Vec<bool> {
    pseudo_labels
        .iter()
        .enumerate()
        .map(|(i, &y)| probabilities.get(i, y) > threshold)
        .collect()
}

/// One predict-then-adapt stage.
///
/// Executes, in order: pseudo-labeling with the pre-update model, class
/// selection, confidence statistics update, data masking, `epochs_per_stage`
/// optimizer steps on the masked combined objective (means taken over the
/// mask support), and the gradient-free momentum-model update. An all-zero
/// mask skips the optimizer step (losses report as zero) but still refreshes
/// the momentum model and advances the time step.
pub fn evolve_step(state: &mut EvolverState, batch: &Matrix) -> Result<StageOutcome> {
    if batch.rows() == 0 {
        return Err(Error::InvalidArgument("empty stage batch".into()));
    }
    if batch.cols() != state.current.feature_dim() {
        return Err(Error::shape(
            "evolve_step",
            format!("feature dim {}", state.current.feature_dim()),
            format!("{}", batch.cols()),
        ));
    }
    let n = batch.rows();
    let num_classes = state.current.class_count();
    let config = state.config.clone();
    let flags = state.flags.clone();

    // (1) predict with the previous stage's model.
    let pseudo = pseudo_label_batch(&state.current, batch)?;

    // (2) restrict the label space to the classes present.
    let selected: Vec<usize> = if flags.disable_class_selection {
        (0..num_classes).collect()
    } else {
        select_classes(&pseudo.labels)
    };

    // (3) momentum-update per-class confidence statistics.
    let pre_update = state.confidence.clone();
    if !flags.disable_data_selection {
        update_confidence(
            &mut state.confidence,
            &pseudo.labels,
            &pseudo.probabilities,
            config.confidence_momentum,
        );
    }

    // (4) confidence mask over the stage.
    let mask: Vec<bool> = if flags.disable_data_selection {
        vec![true; n]
    } else if let Some(threshold) = flags.fixed_threshold {
        fixed_threshold_mask(&pseudo.labels, &pseudo.probabilities, threshold)
    } else {
        let conf = if config.use_pre_update_confidence {
            &pre_update
        } else {
            &state.confidence
        };
        data_mask(&pseudo.labels, &pseudo.probabilities, conf, config.tau)
    };
    let kept: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();

    // (5) optimizer steps on the masked combined objective.
    let mut losses = StageLosses::default();
    if !kept.is_empty() {
        let nf = kept.len() as f64;
        let use_kl = config.lambda != 0.0 && !flags.disable_momentum_model;
        for epoch in 0..config.epochs_per_stage {
            let mut grad = Matrix::zeros(num_classes, batch.cols());
            let mut ce_sum = 0.0;
            for &i in &kept {
                let (g, l) = selective_ce_grad(
                    state.current.weights(),
                    batch.row(i),
                    pseudo.labels[i],
                    &selected,
                )?;
                for (acc, v) in grad.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *acc += v;
                }
                ce_sum += l;
            }
            for v in grad.as_mut_slice() {
                *v /= nf;
            }
            let mut kl_sum = 0.0;
            if use_kl {
                let mut kl_accum = Matrix::zeros(num_classes, batch.cols());
                for &i in &kept {
                    let (g, l) = kl_distill_grad(
                        state.current.weights(),
                        state.ema.weights(),
                        batch.row(i),
                    )?;
                    for (acc, v) in kl_accum.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *acc += v;
                    }
                    kl_sum += l;
                }
                for (acc, v) in grad.as_mut_slice().iter_mut().zip(kl_accum.as_slice()) {
                    *acc += config.lambda * (v / nf);
                }
            }
            if epoch == 0 {
                losses.selective_ce = ce_sum / nf;
                losses.distillation = if use_kl { kl_sum / nf } else { 0.0 };
                losses.total = losses.selective_ce + config.lambda * losses.distillation;
            }
            adam_step(state.current.weights_mut(), &grad, &mut state.adam)?;
        }
    }

    // (6) gradient-free momentum model refresh; runs on every stage.
    if flags.disable_momentum_model {
        state.ema = state.current.clone();
    } else {
        let m1 = config.ema_momentum;
        let cur = state.current.weights().as_slice();
        for (e, &c) in state.ema.weights_mut().as_mut_slice().iter_mut().zip(cur) {
            *e = m1 * *e + (1.0 - m1) * c;
        }
    }

    state.time_step += 1;
    Ok(StageOutcome {
        predictions: pseudo.labels,
        selected_classes: selected,
        mask,
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random_model(classes: usize, dim: usize, seed: u64) -> CompatibilityModel {
        let mut rng = rng::stream(seed);
        CompatibilityModel::new(
            Matrix::new(
                classes,
                dim,
                (0..classes * dim)
                    .map(|_| rng::standard_normal(&mut rng))
                    .collect(),
            )
            .unwrap(),
        )
    }

    fn random_batch(n: usize, dim: usize, seed: u64) -> Matrix {
        let mut rng = rng::stream(seed);
        Matrix::new(
            n,
            dim,
            (0..n * dim)
                .map(|_| rng::standard_normal(&mut rng))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn pseudo_labels_follow_identity_weights() {
        let model = CompatibilityModel::new(Matrix::identity(3));
        let batch = Matrix::new(2, 3, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let out = pseudo_label_batch(&model, &batch).unwrap();
        assert_eq!(out.labels, vec![1, 2]);
    }

    #[test]
    fn pseudo_labels_match_brute_force() {
        let model = random_model(6, 4, 31);
        let batch = random_batch(10, 4, 32);
        let out = pseudo_label_batch(&model, &batch).unwrap();
        for i in 0..10 {
            let scores = model.scores(batch.row(i)).unwrap();
            let mut best = 0;
            for y in 1..6 {
                if scores[y] > scores[best] {
                    best = y;
                }
            }
            assert_eq!(out.labels[i], best);
        }
    }

    #[test]
    fn pseudo_label_rejects_empty_batch() {
        let model = random_model(3, 2, 1);
        assert!(matches!(
            pseudo_label_batch(&model, &Matrix::zeros(0, 2)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn select_classes_is_sorted_unique() {
        assert_eq!(select_classes(&[3, 1, 3, 1]), vec![1, 3]);
        assert_eq!(select_classes(&[2, 2, 2]), vec![2]);
        assert_eq!(select_classes(&[]), Vec::<usize>::new());
    }

    #[test]
    fn confidence_update_matches_hand_value() {
        let mut conf = ClassConfidence::new(2);
        conf.delta_ema[1] = 0.5;
        let mut probs = Matrix::zeros(1, 2);
        probs.set(0, 1, 0.7);
        update_confidence(&mut conf, &[1], &probs, 0.9);
        assert!((conf.value(1) - 0.52).abs() < 1e-15);
        // Class 0 never appeared: untouched.
        assert_eq!(conf.value(0), 1.0);
        assert!(!conf.is_initialized(0));
        assert!(conf.is_initialized(1));
    }

    #[test]
    fn confidence_update_matches_loop_oracle() {
        let mut rng = rng::stream(77);
        let n = 30;
        let classes = 3;
        let labels: Vec<usize> = (0..n).map(|_| rng::index(&mut rng, classes)).collect();
        let mut probs = Matrix::zeros(n, classes);
        for i in 0..n {
            // any values in (0,1) work; only the labeled column is read
            for y in 0..classes {
                probs.set(
                    i,
                    y,
                    0.05 + 0.9 * (rng::index(&mut rng, 1000) as f64 / 1000.0),
                );
            }
        }
        let mut conf = ClassConfidence::new(classes);
        update_confidence(&mut conf, &labels, &probs, 0.9);
        for y in 0..classes {
            let picked: Vec<f64> = (0..n)
                .filter(|&i| labels[i] == y)
                .map(|i| probs.get(i, y))
                .collect();
            if picked.is_empty() {
                assert_eq!(conf.value(y), 1.0);
            } else {
                let mean = picked.iter().sum::<f64>() / picked.len() as f64;
                let expected = 0.9 * 1.0 + 0.1 * mean;
                assert!((conf.value(y) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn data_mask_thresholds_as_specified() {
        let mut conf = ClassConfidence::new(1);
        conf.delta_ema[0] = 0.9;
        let mut probs = Matrix::zeros(2, 1);
        probs.set(0, 0, 0.6);
        probs.set(1, 0, 0.4);
        let mask = data_mask(&[0, 0], &probs, &conf, 0.5);
        assert_eq!(mask, vec![true, false]);
    }

    #[test]
    fn tiny_tau_keeps_everything() {
        let conf = ClassConfidence::new(2);
        let mut probs = Matrix::zeros(3, 2);
        for i in 0..3 {
            probs.set(i, 0, 0.01);
            probs.set(i, 1, 0.99);
        }
        let mask = data_mask(&[1, 1, 0], &probs, &conf, 1e-9);
        assert_eq!(mask, vec![true, true, true]);
    }

    #[test]
    fn init_state_clones_and_zeroes() {
        let base = random_model(4, 3, 2);
        let state = init_state(&base, EvolverConfig::default(), AblationFlags::default()).unwrap();
        assert_eq!(
            state.current.weights().as_slice(),
            base.weights().as_slice()
        );
        assert_eq!(state.ema.weights().as_slice(), base.weights().as_slice());
        assert_eq!(state.time_step, 0);
        assert!(state.confidence.values().iter().all(|&v| v == 1.0));
        assert_eq!(state.adam().step_count(), 0);
    }

    #[test]
    fn lambda_zero_freezes_unselected_rows() {
        let base = random_model(5, 3, 3);
        let config = EvolverConfig {
            lambda: 0.0,
            learning_rate: 0.05,
            tau: 1e-9, // keep every sample so the step definitely runs
            ..Default::default()
        };
        let mut state = init_state(&base, config, AblationFlags::default()).unwrap();
        // Two stages so Adam's moments are nonzero by the second one.
        for seed in [40, 41] {
            let batch = random_batch(6, 3, seed);
            let before = state.current.weights().clone();
            let outcome = evolve_step(&mut state, &batch).unwrap();
            for y in 0..5 {
                if !outcome.selected_classes.contains(&y) {
                    assert_eq!(
                        state.current.weights().row(y),
                        before.row(y),
                        "unselected row {y} moved"
                    );
                }
            }
        }
    }

    #[test]
    fn ema_converges_geometrically_on_frozen_weights() {
        let base = random_model(3, 2, 4);
        let target = random_model(3, 2, 5);
        let m1 = 0.9;
        let mut ema: Vec<f64> = base.weights().as_slice().to_vec();
        for _ in 0..200 {
            for (e, &t) in ema.iter_mut().zip(target.weights().as_slice()) {
                *e = m1 * *e + (1.0 - m1) * t;
            }
        }
        for (e, &t) in ema.iter().zip(target.weights().as_slice()) {
            assert!((e - t).abs() < 1e-8);
        }
    }

    #[test]
    fn ema_closed_form_over_stages() {
        // With a fixed threshold of 1.0 no sample ever passes the mask, so
        // the optimizer never moves the weights and each stage's EMA update
        // sees exactly the weights poked in below. After k stages the EMA
        // must equal m1^k W0 + (1-m1) sum_j m1^(k-1-j) W_j.
        let base = random_model(2, 2, 6);
        let m1 = 0.75;
        let config = EvolverConfig {
            ema_momentum: m1,
            ..Default::default()
        };
        let flags = AblationFlags {
            fixed_threshold: Some(1.0),
            ..Default::default()
        };
        let mut state = init_state(&base, config, flags).unwrap();
        let w_js: Vec<Matrix> = (0..4)
            .map(|k| random_model(2, 2, 100 + k).weights().clone())
            .collect();
        let batch = random_batch(3, 2, 7);
        for w in &w_js {
            *state.current.weights_mut() = w.clone();
            let outcome = evolve_step(&mut state, &batch).unwrap();
            assert!(outcome.mask.iter().all(|&m| !m));
        }
        let k = w_js.len() as i32;
        for idx in 0..4 {
            let mut expect = m1.powi(k) * base.weights().as_slice()[idx];
            for (j, w) in w_js.iter().enumerate() {
                expect += (1.0 - m1) * m1.powi(k - 1 - j as i32) * w.as_slice()[idx];
            }
            let got = state.ema.weights().as_slice()[idx];
            assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
        }
    }

    #[test]
    fn all_masked_out_stage_still_advances_ema_and_time() {
        let base = random_model(3, 2, 8);
        let config = EvolverConfig {
            // Default confidence is 1.0 and tau close to 1: nothing passes
            // (softmax max over 3 distinct classes is < 1 - 1e-12).
            tau: 1.0,
            ..Default::default()
        };
        let mut state = init_state(&base, config, AblationFlags::default()).unwrap();
        let batch = random_batch(4, 2, 9);
        let before_w = state.current.weights().clone();
        let outcome = evolve_step(&mut state, &batch).unwrap();
        assert!(outcome.mask.iter().all(|&m| !m));
        assert_eq!(outcome.losses.total, 0.0);
        assert_eq!(state.current.weights().as_slice(), before_w.as_slice());
        assert_eq!(state.adam().step_count(), 0);
        assert_eq!(state.time_step, 1);
    }

    #[test]
    fn predictions_come_from_pre_update_model() {
        let base = random_model(4, 3, 10);
        let config = EvolverConfig {
            learning_rate: 0.5, // huge step so post-update predictions differ
            tau: 1e-9,
            ..Default::default()
        };
        let mut state = init_state(&base, config, AblationFlags::default()).unwrap();
        let batch = random_batch(8, 3, 11);
        let snapshot = state.current.clone();
        let outcome = evolve_step(&mut state, &batch).unwrap();
        let replay = pseudo_label_batch(&snapshot, &batch).unwrap();
        assert_eq!(outcome.predictions, replay.labels);
    }

    #[test]
    fn disabled_momentum_mirrors_current_into_ema() {
        let base = random_model(3, 2, 12);
        let flags = AblationFlags {
            disable_momentum_model: true,
            ..Default::default()
        };
        let config = EvolverConfig {
            learning_rate: 0.1,
            tau: 1e-9,
            ..Default::default()
        };
        let mut state = init_state(&base, config, flags).unwrap();
        let batch = random_batch(5, 2, 13);
        evolve_step(&mut state, &batch).unwrap();
        assert_eq!(
            state.ema.weights().as_slice(),
            state.current.weights().as_slice()
        );
        assert_ne!(
            state.current.weights().as_slice(),
            base.weights().as_slice()
        );
    }

    #[test]
    fn flags_validation_rejects_conflicting_selection() {
        let flags = AblationFlags {
            disable_data_selection: true,
            fixed_threshold: Some(0.8),
            ..Default::default()
        };
        assert!(flags.validate().is_err());
    }

    #[test]
    fn confidence_stays_in_unit_interval() {
        let base = random_model(4, 3, 14);
        let config = EvolverConfig {
            tau: 0.2,
            ..Default::default()
        };
        let mut state = init_state(&base, config, AblationFlags::default()).unwrap();
        for seed in 0..20 {
            let batch = random_batch(7, 3, 200 + seed);
            evolve_step(&mut state, &batch).unwrap();
            for &v in state.confidence.values() {
                assert!(v > 0.0 && v <= 1.0, "confidence {v} left (0, 1]");
            }
        }
    }

    #[test]
    fn determinism_bitwise_across_runs() {
        let base = random_model(5, 4, 15);
        let run = || {
            let mut state = init_state(
                &base,
                EvolverConfig {
                    tau: 0.3,
                    learning_rate: 1e-3,
                    ..Default::default()
                },
                AblationFlags::default(),
            )
            .unwrap();
            for seed in 0..10 {
                let batch = random_batch(9, 4, 300 + seed);
                evolve_step(&mut state, &batch).unwrap();
            }
            state.current.weights().clone()
        };
        let a = run();
        let b = run();
        assert_eq!(a.as_slice(), b.as_slice());
    }
}

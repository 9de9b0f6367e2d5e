//! The streaming evaluation protocol: predict each stage with the previous
//! model, adapt, accumulate per-class tallies over the whole stream, and
//! aggregate across seeds.
//!
//! Labels live exclusively in this module. The evolver and the ERM baseline
//! receive feature batches only, so no data path can leak a test label into
//! training; the harness scores the predictions each step hands back.

use std::thread;

use serde::{Deserialize, Serialize};

use crate::data::DatasetBundle;
use crate::erm::{erm_init, erm_step};
use crate::error::{Error, Result};
use crate::evolver::{evolve_step, init_state, AblationFlags, EvolverConfig};
use crate::linalg::Matrix;
use crate::metrics::{gzsl_metrics, metric_stats, ClassTallies, GzslMetrics, MetricStats};
use crate::model::CompatibilityModel;
use crate::stream::{make_stream, StreamPlan};

/// Version of the JSON report schema.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One row of the flat per-stage log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub time_step: usize,
    pub samples: usize,
    /// Samples that passed the data-selection mask.
    pub kept: usize,
    pub selected_classes: usize,
    pub seen_hits: u64,
    pub seen_total: u64,
    pub unseen_hits: u64,
    pub unseen_total: u64,
    pub ce_loss: f64,
    pub kl_loss: f64,
    pub total_loss: f64,
}

/// Full-test-set metrics of a frozen snapshot. Diagnostic only: it peeks at
/// test data across time and never feeds back into training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub time_step: usize,
    pub acc_unseen: f64,
    pub acc_seen: f64,
    pub harmonic: f64,
}

/// Everything one seeded run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRunReport {
    pub seed: u64,
    pub metrics: GzslMetrics,
    pub per_class_hits: Vec<u64>,
    pub per_class_totals: Vec<u64>,
    pub stages: Vec<StageRecord>,
    pub diagnostic_curve: Vec<CurvePoint>,
}

/// A run's report plus the artifacts needed for replay and curves.
#[derive(Debug, Clone)]
pub struct EvolutionRun {
    pub report: SeedRunReport,
    pub final_model: CompatibilityModel,
    /// `(time_step, frozen model)` pairs, populated when a curve stride is
    /// requested: time 0, every stride stages, and the final stage.
    pub snapshots: Vec<(usize, CompatibilityModel)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub acc_unseen: f64,
    pub acc_seen: f64,
    pub harmonic: f64,
}

/// Per-seed metrics with mean and sample standard deviation per metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub per_seed: Vec<SeedMetrics>,
    pub acc_unseen: MetricStats,
    pub acc_seen: MetricStats,
    pub harmonic: MetricStats,
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub aggregate: AggregateReport,
    pub runs: Vec<EvolutionRun>,
}

impl ProtocolRun {
    pub fn reports(&self) -> Vec<SeedRunReport> {
        self.runs.iter().map(|r| r.report.clone()).collect()
    }
}

/// The self-contained JSON report a run emits: config echo, seed list, PRNG
/// identifier, format versions, aggregate metrics, and per-stage logs —
/// sufficient for exact replay given the input files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub prng: String,
    pub dataset_path: String,
    pub model_path: String,
    pub stage_size: usize,
    pub seeds: Vec<u64>,
    pub config: EvolverConfig,
    pub flags: AblationFlags,
    pub bundle_format_version: u32,
    pub model_format_version: u32,
    pub aggregate: AggregateReport,
    pub runs: Vec<SeedRunReport>,
}

fn check_plan(plan: &StreamPlan, test_count: usize) -> Result<()> {
    if plan.order.len() != test_count {
        return Err(Error::Protocol(format!(
            "stream plan covers {} samples but the test set holds {test_count}",
            plan.order.len()
        )));
    }
    let mut visited = vec![false; test_count];
    for &pos in &plan.order {
        if pos >= test_count || visited[pos] {
            return Err(Error::Protocol(
                "stream plan order is not a permutation of the test set".into(),
            ));
        }
        visited[pos] = true;
    }
    Ok(())
}

fn gather_batch(bundle: &DatasetBundle, stage: &[usize]) -> Matrix {
    let mut batch = Matrix::zeros(stage.len(), bundle.feature_dim());
    for (k, &pos) in stage.iter().enumerate() {
        let global = bundle.test_indices[pos];
        batch
            .row_mut(k)
            .copy_from_slice(bundle.features.row(global));
    }
    batch
}

fn seen_mask(bundle: &DatasetBundle) -> Vec<bool> {
    let mut mask = vec![false; bundle.num_classes()];
    for &c in &bundle.seen_classes {
        mask[c] = true;
    }
    mask
}

struct StageScore {
    seen_hits: u64,
    seen_total: u64,
    unseen_hits: u64,
    unseen_total: u64,
}

fn score_stage(
    bundle: &DatasetBundle,
    stage: &[usize],
    predictions: &[usize],
    is_seen: &[bool],
    tallies: &mut ClassTallies,
) -> StageScore {
    let mut score = StageScore {
        seen_hits: 0,
        seen_total: 0,
        unseen_hits: 0,
        unseen_total: 0,
    };
    for (k, &pos) in stage.iter().enumerate() {
        let truth = bundle.labels[bundle.test_indices[pos]];
        let hit = predictions[k] == truth;
        tallies.record(truth, predictions[k]);
        if is_seen[truth] {
            score.seen_total += 1;
            score.seen_hits += hit as u64;
        } else {
            score.unseen_total += 1;
            score.unseen_hits += hit as u64;
        }
    }
    score
}

fn want_snapshot(stride: Option<usize>, time_step: usize, last: usize) -> bool {
    match stride {
        None => false,
        Some(s) => time_step == last || (s > 0 && time_step.is_multiple_of(s)),
    }
}

/// One full predict-then-adapt pass over the stream.
///
/// Labels are used only to score the predictions each stage returns; the
/// evolver itself receives feature batches exclusively.
pub fn run_evolution(
    base: &CompatibilityModel,
    bundle: &DatasetBundle,
    plan: &StreamPlan,
    config: &EvolverConfig,
    flags: &AblationFlags,
    curve_stride: Option<usize>,
) -> Result<EvolutionRun> {
    check_plan(plan, bundle.test_indices.len())?;
    let is_seen = seen_mask(bundle);
    let mut state = init_state(base, config.clone(), flags.clone())?;
    let mut tallies = ClassTallies::new(bundle.num_classes());
    let mut stages = Vec::with_capacity(plan.num_stages());
    let mut snapshots = Vec::new();
    if curve_stride.is_some() {
        snapshots.push((0, base.clone()));
    }
    let last = plan.num_stages();
    for (idx, stage) in plan.stages().enumerate() {
        let t = idx + 1;
        let batch = gather_batch(bundle, stage);
        let outcome = evolve_step(&mut state, &batch)?;
        let score = score_stage(bundle, stage, &outcome.predictions, &is_seen, &mut tallies);
        stages.push(StageRecord {
            time_step: t,
            samples: stage.len(),
            kept: outcome.mask.iter().filter(|&&m| m).count(),
            selected_classes: outcome.selected_classes.len(),
            seen_hits: score.seen_hits,
            seen_total: score.seen_total,
            unseen_hits: score.unseen_hits,
            unseen_total: score.unseen_total,
            ce_loss: outcome.losses.selective_ce,
            kl_loss: outcome.losses.distillation,
            total_loss: outcome.losses.total,
        });
        if want_snapshot(curve_stride, t, last) {
            snapshots.push((t, state.current.clone()));
        }
    }
    debug_assert_eq!(tallies.sample_count() as usize, bundle.test_indices.len());
    let diagnostic_curve = evolution_curve(&snapshots, bundle)?;
    let metrics = gzsl_metrics(&tallies, &bundle.seen_classes, &bundle.unseen_classes);
    Ok(EvolutionRun {
        report: SeedRunReport {
            seed: plan.seed,
            metrics,
            per_class_hits: tallies.hits,
            per_class_totals: tallies.totals,
            stages,
            diagnostic_curve,
        },
        final_model: state.current,
        snapshots,
    })
}

/// The same pass driven by the independently coded ERM baseline.
pub fn run_erm_evolution(
    base: &CompatibilityModel,
    bundle: &DatasetBundle,
    plan: &StreamPlan,
    config: &EvolverConfig,
    curve_stride: Option<usize>,
) -> Result<EvolutionRun> {
    check_plan(plan, bundle.test_indices.len())?;
    config.validate()?;
    let is_seen = seen_mask(bundle);
    let mut state = erm_init(base, config.learning_rate)?;
    let mut tallies = ClassTallies::new(bundle.num_classes());
    let mut stages = Vec::with_capacity(plan.num_stages());
    let mut snapshots = Vec::new();
    if curve_stride.is_some() {
        snapshots.push((0, base.clone()));
    }
    let last = plan.num_stages();
    for (idx, stage) in plan.stages().enumerate() {
        let t = idx + 1;
        let batch = gather_batch(bundle, stage);
        let outcome = erm_step(&mut state, &batch, config.epochs_per_stage)?;
        let score = score_stage(bundle, stage, &outcome.predictions, &is_seen, &mut tallies);
        stages.push(StageRecord {
            time_step: t,
            samples: stage.len(),
            kept: stage.len(),
            selected_classes: bundle.num_classes(),
            seen_hits: score.seen_hits,
            seen_total: score.seen_total,
            unseen_hits: score.unseen_hits,
            unseen_total: score.unseen_total,
            ce_loss: outcome.ce_loss,
            kl_loss: 0.0,
            total_loss: outcome.ce_loss,
        });
        if want_snapshot(curve_stride, t, last) {
            snapshots.push((t, state.model.clone()));
        }
    }
    let diagnostic_curve = evolution_curve(&snapshots, bundle)?;
    let metrics = gzsl_metrics(&tallies, &bundle.seen_classes, &bundle.unseen_classes);
    Ok(EvolutionRun {
        report: SeedRunReport {
            seed: plan.seed,
            metrics,
            per_class_hits: tallies.hits,
            per_class_totals: tallies.totals,
            stages,
            diagnostic_curve,
        },
        final_model: state.model,
        snapshots,
    })
}

/// Evaluates a frozen model on the full labeled test partition.
pub fn evaluate_static(model: &CompatibilityModel, bundle: &DatasetBundle) -> Result<GzslMetrics> {
    let mut tallies = ClassTallies::new(bundle.num_classes());
    for &global in &bundle.test_indices {
        let (pred, _) = model.predict(bundle.features.row(global))?;
        tallies.record(bundle.labels[global], pred);
    }
    Ok(gzsl_metrics(
        &tallies,
        &bundle.seen_classes,
        &bundle.unseen_classes,
    ))
}

/// Full-test-set metrics for each frozen snapshot.
pub fn evolution_curve(
    snapshots: &[(usize, CompatibilityModel)],
    bundle: &DatasetBundle,
) -> Result<Vec<CurvePoint>> {
    let mut curve = Vec::with_capacity(snapshots.len());
    for (t, model) in snapshots {
        let m = evaluate_static(model, bundle)?;
        curve.push(CurvePoint {
            time_step: *t,
            acc_unseen: m.acc_unseen,
            acc_seen: m.acc_seen,
            harmonic: m.harmonic,
        });
    }
    Ok(curve)
}

/// Aggregates per-seed metrics: mean and sample standard deviation.
pub fn aggregate_runs(runs: &[SeedRunReport]) -> AggregateReport {
    let per_seed: Vec<SeedMetrics> = runs
        .iter()
        .map(|r| SeedMetrics {
            seed: r.seed,
            acc_unseen: r.metrics.acc_unseen,
            acc_seen: r.metrics.acc_seen,
            harmonic: r.metrics.harmonic,
        })
        .collect();
    let col = |f: fn(&SeedMetrics) -> f64| -> Vec<f64> { per_seed.iter().map(f).collect() };
    AggregateReport {
        acc_unseen: metric_stats(&col(|m| m.acc_unseen)),
        acc_seen: metric_stats(&col(|m| m.acc_seen)),
        harmonic: metric_stats(&col(|m| m.harmonic)),
        per_seed,
    }
}

/// Runs the protocol once per seed from a fresh copy of the base model.
///
/// Seeds are independent: with `jobs > 1` they run on worker threads, and
/// results are joined in seed order so aggregation is identical either way.
/// `erm` switches every run to the standalone baseline.
#[allow(clippy::too_many_arguments)]
pub fn run_protocol(
    base: &CompatibilityModel,
    bundle: &DatasetBundle,
    config: &EvolverConfig,
    flags: &AblationFlags,
    seeds: &[u64],
    stage_size: usize,
    jobs: usize,
    curve_stride: Option<usize>,
    erm: bool,
) -> Result<ProtocolRun> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed required".into()));
    }
    let run_one = |&seed: &u64| -> Result<EvolutionRun> {
        let plan = make_stream(bundle.test_indices.len(), stage_size, seed)?;
        if erm {
            run_erm_evolution(base, bundle, &plan, config, curve_stride)
        } else {
            run_evolution(base, bundle, &plan, config, flags, curve_stride)
        }
    };

    let workers = jobs.max(1).min(seeds.len());
    let runs: Vec<EvolutionRun> = if workers <= 1 {
        seeds.iter().map(run_one).collect::<Result<_>>()?
    } else {
        let mut slots: Vec<Option<Result<EvolutionRun>>> = Vec::new();
        slots.resize_with(seeds.len(), || None);
        thread::scope(|scope| {
            let mut handles = Vec::new();
            for w in 0..workers {
                let run_one = &run_one;
                handles.push(scope.spawn(move || {
                    let mut out = Vec::new();
                    for (i, seed) in seeds.iter().enumerate() {
                        if i % workers == w {
                            out.push((i, run_one(seed)));
                        }
                    }
                    out
                }));
            }
            for handle in handles {
                for (i, res) in handle.join().expect("protocol worker panicked") {
                    slots[i] = Some(res);
                }
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("every seed scheduled"))
            .collect::<Result<_>>()?
    };

    let reports: Vec<SeedRunReport> = runs.iter().map(|r| r.report.clone()).collect();
    Ok(ProtocolRun {
        aggregate: aggregate_runs(&reports),
        runs,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub aggregate: AggregateReport,
}

/// The five-configuration comparison (full model plus the four single-switch
/// baselines), every row over the same stream plans.
pub fn run_ablation_suite(
    base: &CompatibilityModel,
    bundle: &DatasetBundle,
    config: &EvolverConfig,
    seeds: &[u64],
    stage_size: usize,
    fixed_threshold: f64,
    jobs: usize,
) -> Result<Vec<AblationRow>> {
    let rows: Vec<(&str, AblationFlags)> = vec![
        ("full", AblationFlags::default()),
        (
            "no_momentum_model",
            AblationFlags {
                disable_momentum_model: true,
                ..Default::default()
            },
        ),
        (
            "no_class_selection",
            AblationFlags {
                disable_class_selection: true,
                ..Default::default()
            },
        ),
        (
            "no_data_selection",
            AblationFlags {
                disable_data_selection: true,
                ..Default::default()
            },
        ),
        (
            "fixed_threshold",
            AblationFlags {
                fixed_threshold: Some(fixed_threshold),
                ..Default::default()
            },
        ),
    ];
    let mut out = Vec::with_capacity(rows.len());
    for (label, flags) in rows {
        let run = run_protocol(
            base, bundle, config, &flags, seeds, stage_size, jobs, None, false,
        )?;
        out.push(AblationRow {
            label: label.to_string(),
            aggregate: run.aggregate,
        });
    }
    Ok(out)
}

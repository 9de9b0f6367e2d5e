//! Evolutionary generalized zero-shot learning (EGZSL).
//!
//! A base compatibility model is trained once on labeled seen-class data,
//! then adapts online over an unlabeled test stream: each stage is first
//! predicted with the previous model, then used for one step of pseudo-label
//! self-training with momentum-model distillation, class selection, and
//! adaptive per-class confidence thresholds.
//!
//! Module map:
//! - [`linalg`], [`loss`], [`optim`]: the dense numerical kernel (matrices,
//!   stable softmax, analytic loss gradients, Adam);
//! - [`model`]: attribute tables, the per-class linear compatibility model,
//!   and the seen-class bilinear base trainer;
//! - [`evolver`]: the per-stage predict-then-adapt step and its ablations;
//! - [`erm`]: an independently coded plain pseudo-label baseline;
//! - [`stream`], [`metrics`], [`harness`]: seeded stream plans, per-class
//!   GZSL metrics, and the multi-seed evaluation protocol;
//! - [`data`]: dataset bundle container format and a synthetic generator.

pub mod data;
pub mod erm;
pub mod error;
pub mod evolver;
pub mod harness;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod stream;

pub use data::{load_bundle, save_bundle, synth_generate, DatasetBundle, SynthConfig};
pub use error::{Error, Result};
pub use evolver::{
    evolve_step, init_state, AblationFlags, ClassConfidence, EvolverConfig, EvolverState,
    StageOutcome,
};
pub use harness::{
    aggregate_runs, evaluate_static, evolution_curve, run_ablation_suite, run_erm_evolution,
    run_evolution, run_protocol, AblationRow, AggregateReport, CurvePoint, EvolutionRun,
    ProtocolRun, ReportDocument, SeedMetrics, SeedRunReport, StageRecord, REPORT_SCHEMA_VERSION,
};
pub use linalg::Matrix;
pub use metrics::{
    gzsl_metrics, harmonic_mean, metric_stats, ClassTallies, GzslMetrics, MetricStats,
};
pub use model::{
    train_base, AttributeTable, BaseTrainConfig, BaseTrainOutcome, CompatibilityModel,
    MODEL_FORMAT_VERSION,
};
pub use rng::PRNG_ID;
pub use stream::{make_stream, StreamPlan};

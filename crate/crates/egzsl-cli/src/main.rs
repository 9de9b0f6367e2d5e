//! `egzsl` — generate data, train the base model, run evolution, compare
//! reports.
//!
//! Exit codes: 0 success, 1 runtime or protocol error, 2 usage error.

mod tables;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use egzsl_core::data::BUNDLE_FORMAT_VERSION;
use egzsl_core::harness::REPORT_SCHEMA_VERSION;
use egzsl_core::model::MODEL_FORMAT_VERSION;
use egzsl_core::{
    load_bundle, run_protocol, save_bundle, synth_generate, train_base, AblationFlags,
    BaseTrainConfig, CompatibilityModel, EvolverConfig, ProtocolRun, ReportDocument, SynthConfig,
    PRNG_ID,
};

#[derive(Parser)]
#[command(
    name = "egzsl",
    version,
    about = "Evolutionary generalized zero-shot learning pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset bundle with controllable domain shift.
    Synth(SynthArgs),
    /// Train the bilinear base model on the bundle's base partition.
    BaseTrain(BaseTrainArgs),
    /// Run the streaming predict-then-adapt protocol and write a report.
    Evolve(EvolveArgs),
    /// Render a comparison table across prior report files.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output bundle directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    num_seen: u32,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    num_unseen: u32,
    /// Feature dimension.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..))]
    dx: u32,
    /// Attribute dimension.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    da: u32,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    base_per_class: u32,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    test_per_class: u32,
    /// Feature spread around each class mean.
    #[arg(long, default_value_t = 0.5)]
    spread: f64,
    /// Mean perturbation applied to unseen classes only (domain shift).
    #[arg(long, default_value_t = 0.0)]
    map_noise: f64,
    /// Latent attribute dimension (defaults to --da: isotropic attributes).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    attr_latent: Option<u32>,
}

#[derive(Args)]
struct BaseTrainArgs {
    /// Bundle directory.
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u32).range(1..))]
    epochs: u32,
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u32).range(1..))]
    minibatch: u32,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvolveArgs {
    /// Bundle directory.
    #[arg(long)]
    data: PathBuf,
    /// Base model checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Report JSON output path.
    #[arg(long)]
    out: PathBuf,
    /// Samples per evolutionary stage.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    stage_size: u32,
    /// Comma-separated stream seeds; one run per seed.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    /// Weight of the distillation loss.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Base confidence threshold.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Momentum-model smoothing factor.
    #[arg(long, default_value_t = 0.99)]
    m1: f64,
    /// Class-confidence smoothing factor.
    #[arg(long, default_value_t = 0.9)]
    m2: f64,
    #[arg(long, default_value_t = 5e-5)]
    lr: f64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    epochs_per_stage: u32,
    /// Run the plain pseudo-label baseline (equivalent to the three
    /// --no-* switches below together).
    #[arg(long)]
    erm: bool,
    /// Disable the momentum model (drop the distillation term).
    #[arg(long = "no-momentum")]
    no_momentum: bool,
    /// Cross-entropy over the full label set instead of selected classes.
    #[arg(long = "no-class-sel")]
    no_class_sel: bool,
    /// Train on every sample (no confidence mask).
    #[arg(long = "no-data-sel", conflicts_with = "fixed_threshold")]
    no_data_sel: bool,
    /// Replace the adaptive threshold with this fixed one.
    #[arg(long)]
    fixed_threshold: Option<f64>,
    /// Use the pre-update confidence values in the data mask.
    #[arg(long)]
    pre_update_confidence: bool,
    /// Snapshot the model every N stages and attach a full-test evolution
    /// curve to the report (diagnostic).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    curve_stride: Option<u32>,
    /// Flat per-stage CSV output path.
    #[arg(long)]
    stage_csv: Option<PathBuf>,
    /// Evolution curve CSV output path.
    #[arg(long, requires = "curve_stride")]
    curve_csv: Option<PathBuf>,
    /// Directory for snapshot checkpoints.
    #[arg(long, requires = "curve_stride")]
    snapshot_dir: Option<PathBuf>,
    /// Worker threads across seeds (each run stays sequential).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: u32,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON files to compare.
    #[arg(required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Emit CSV instead of an aligned text table.
    #[arg(long)]
    csv: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::BaseTrain(args) => cmd_base_train(args),
        Command::Evolve(args) => cmd_evolve(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_synth(args: SynthArgs) -> egzsl_core::Result<()> {
    let config = SynthConfig {
        num_seen: args.num_seen as usize,
        num_unseen: args.num_unseen as usize,
        feature_dim: args.dx as usize,
        attr_dim: args.da as usize,
        base_per_class: args.base_per_class as usize,
        test_per_class: args.test_per_class as usize,
        cluster_spread: args.spread,
        attribute_map_noise: args.map_noise,
        attr_latent_dim: args.attr_latent.map(|k| k as usize),
        seed: args.seed,
    };
    let bundle = synth_generate(&config)?;
    save_bundle(&bundle, &args.out)?;
    println!(
        "{}",
        serde_json::json!({
            "out": args.out,
            "n_samples": bundle.num_samples(),
            "n_classes": bundle.num_classes(),
            "n_seen": bundle.seen_classes.len(),
            "base_samples": bundle.base_indices.len(),
            "test_samples": bundle.test_indices.len(),
        })
    );
    Ok(())
}

fn cmd_base_train(args: BaseTrainArgs) -> egzsl_core::Result<()> {
    let bundle = load_bundle(&args.data)?;
    let config = BaseTrainConfig {
        epochs: args.epochs as usize,
        minibatch: args.minibatch as usize,
        learning_rate: args.lr,
        weight_decay: args.weight_decay,
        seed: args.seed,
    };
    let (features, labels) = bundle.base_set();
    let outcome = train_base(
        &features,
        &labels,
        &bundle.seen_classes,
        &bundle.attributes,
        &config,
    )?;
    for &c in &outcome.skipped_classes {
        eprintln!("warning: seen class {c} has no base samples; excluded from training");
    }
    outcome.model.save(&args.out)?;
    println!(
        "{}",
        serde_json::json!({
            "out": args.out,
            "seen_train_accuracy": outcome.seen_train_accuracy,
            "class_count": outcome.model.class_count(),
            "feature_dim": outcome.model.feature_dim(),
            "skipped_classes": outcome.skipped_classes,
        })
    );
    Ok(())
}

fn cmd_evolve(args: EvolveArgs) -> egzsl_core::Result<()> {
    let bundle = load_bundle(&args.data)?;
    let base = CompatibilityModel::load(&args.model)?;
    if base.class_count() != bundle.num_classes() || base.feature_dim() != bundle.feature_dim() {
        return Err(egzsl_core::Error::Protocol(format!(
            "checkpoint shape {}x{} does not match bundle ({} classes, feature dim {})",
            base.class_count(),
            base.feature_dim(),
            bundle.num_classes(),
            bundle.feature_dim()
        )));
    }
    let config = EvolverConfig {
        lambda: args.lambda,
        tau: args.tau,
        ema_momentum: args.m1,
        confidence_momentum: args.m2,
        learning_rate: args.lr,
        epochs_per_stage: args.epochs_per_stage as usize,
        use_pre_update_confidence: args.pre_update_confidence,
    };
    let flags = AblationFlags {
        disable_momentum_model: args.no_momentum || args.erm,
        disable_class_selection: args.no_class_sel || args.erm,
        disable_data_selection: args.no_data_sel || args.erm,
        fixed_threshold: args.fixed_threshold,
    };
    let curve_stride = args.curve_stride.map(|s| s as usize);
    let protocol = run_protocol(
        &base,
        &bundle,
        &config,
        &flags,
        &args.seeds,
        args.stage_size as usize,
        args.jobs as usize,
        curve_stride,
        false,
    )?;

    if let Some(path) = &args.stage_csv {
        write_text(path, &tables::stage_csv(&protocol))?;
    }
    if let Some(path) = &args.curve_csv {
        write_text(path, &tables::curve_csv(&protocol))?;
    }
    if let Some(dir) = &args.snapshot_dir {
        save_snapshots(dir, &protocol)?;
    }

    let document = ReportDocument {
        schema_version: REPORT_SCHEMA_VERSION,
        prng: PRNG_ID.to_string(),
        dataset_path: args.data.display().to_string(),
        model_path: args.model.display().to_string(),
        stage_size: args.stage_size as usize,
        seeds: args.seeds.clone(),
        config,
        flags,
        bundle_format_version: BUNDLE_FORMAT_VERSION,
        model_format_version: MODEL_FORMAT_VERSION,
        aggregate: protocol.aggregate.clone(),
        runs: protocol.reports(),
    };
    let mut json = serde_json::to_string_pretty(&document).expect("report serializes");
    json.push('\n');
    write_text(&args.out, &json)?;

    println!(
        "{}",
        serde_json::json!({
            "acc_unseen": {"mean": document.aggregate.acc_unseen.mean, "std": document.aggregate.acc_unseen.std},
            "acc_seen": {"mean": document.aggregate.acc_seen.mean, "std": document.aggregate.acc_seen.std},
            "harmonic": {"mean": document.aggregate.harmonic.mean, "std": document.aggregate.harmonic.std},
            "seeds": document.seeds.len(),
            "report": args.out,
        })
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> egzsl_core::Result<()> {
    let mut entries = Vec::new();
    for path in &args.inputs {
        let text = fs::read_to_string(path).map_err(|e| egzsl_core::Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let doc: ReportDocument =
            serde_json::from_str(&text).map_err(|e| egzsl_core::Error::Json {
                path: path.clone(),
                source: e,
            })?;
        entries.push((path.display().to_string(), doc));
    }
    let rendered = if args.csv {
        tables::comparison_csv(&entries)
    } else {
        tables::comparison_table(&entries)
    };
    print!("{rendered}");
    Ok(())
}

fn write_text(path: &Path, text: &str) -> egzsl_core::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| egzsl_core::Error::Io {
                path: parent.to_path_buf(),
                source: e,
            })?;
        }
    }
    fs::write(path, text).map_err(|e| egzsl_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn save_snapshots(dir: &Path, protocol: &ProtocolRun) -> egzsl_core::Result<()> {
    for run in &protocol.runs {
        let seed_dir = dir.join(format!("seed_{}", run.report.seed));
        fs::create_dir_all(&seed_dir).map_err(|e| egzsl_core::Error::Io {
            path: seed_dir.clone(),
            source: e,
        })?;
        for (t, model) in &run.snapshots {
            model.save(&seed_dir.join(format!("snapshot_{t:05}.ckpt")))?;
        }
    }
    Ok(())
}

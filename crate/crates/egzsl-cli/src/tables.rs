//! CSV and text-table rendering over protocol runs and report files.

use egzsl_core::{AggregateReport, MetricStats, ProtocolRun, ReportDocument};

/// Flat per-stage CSV: one row per stage per seed, stable column order.
pub fn stage_csv(protocol: &ProtocolRun) -> String {
    let mut out = String::from(
        "seed,time_step,samples,kept,mask_fill,selected_classes,seen_hits,seen_total,unseen_hits,unseen_total,ce_loss,kl_loss,total_loss\n",
    );
    for run in &protocol.runs {
        for s in &run.report.stages {
            let fill = s.kept as f64 / s.samples as f64;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                run.report.seed,
                s.time_step,
                s.samples,
                s.kept,
                fill,
                s.selected_classes,
                s.seen_hits,
                s.seen_total,
                s.unseen_hits,
                s.unseen_total,
                s.ce_loss,
                s.kl_loss,
                s.total_loss
            ));
        }
    }
    out
}

/// Diagnostic full-test evolution curve, one row per snapshot per seed.
pub fn curve_csv(protocol: &ProtocolRun) -> String {
    let mut out = String::from("seed,time_step,acc_unseen,acc_seen,harmonic\n");
    for run in &protocol.runs {
        for p in &run.report.diagnostic_curve {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                run.report.seed, p.time_step, p.acc_unseen, p.acc_seen, p.harmonic
            ));
        }
    }
    out
}

fn merged_aggregate(entries: &[(String, ReportDocument)]) -> AggregateReport {
    let mut per_seed = Vec::new();
    for (_, doc) in entries {
        per_seed.extend(doc.aggregate.per_seed.iter().copied());
    }
    let col =
        |f: fn(&egzsl_core::SeedMetrics) -> f64| -> Vec<f64> { per_seed.iter().map(f).collect() };
    AggregateReport {
        acc_unseen: egzsl_core::metric_stats(&col(|m| m.acc_unseen)),
        acc_seen: egzsl_core::metric_stats(&col(|m| m.acc_seen)),
        harmonic: egzsl_core::metric_stats(&col(|m| m.harmonic)),
        per_seed,
    }
}

fn pct(stats: &MetricStats) -> String {
    format!("{:.1}±{:.1}", stats.mean * 100.0, stats.std * 100.0)
}

/// Aligned text table: one row per input file plus a merged row recomputed
/// over the union of per-seed results.
pub fn comparison_table(entries: &[(String, ReportDocument)]) -> String {
    let mut rows: Vec<[String; 5]> = vec![[
        "report".into(),
        "seeds".into(),
        "A_u".into(),
        "A_s".into(),
        "H".into(),
    ]];
    for (name, doc) in entries {
        rows.push([
            name.clone(),
            doc.aggregate.per_seed.len().to_string(),
            pct(&doc.aggregate.acc_unseen),
            pct(&doc.aggregate.acc_seen),
            pct(&doc.aggregate.harmonic),
        ]);
    }
    if entries.len() > 1 {
        let merged = merged_aggregate(entries);
        rows.push([
            "merged".into(),
            merged.per_seed.len().to_string(),
            pct(&merged.acc_unseen),
            pct(&merged.acc_seen),
            pct(&merged.harmonic),
        ]);
    }
    let mut widths = [0usize; 5];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in &rows {
        for (i, (cell, w)) in row.iter().zip(&widths).enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            out.push_str(&format!("{cell:<w$}", w = w));
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    }
    out
}

/// CSV variant of the comparison, full precision.
pub fn comparison_csv(entries: &[(String, ReportDocument)]) -> String {
    let mut out = String::from(
        "report,seeds,acc_unseen_mean,acc_unseen_std,acc_seen_mean,acc_seen_std,harmonic_mean,harmonic_std\n",
    );
    let mut push_row = |label: &str, agg: &AggregateReport| {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            label,
            agg.per_seed.len(),
            agg.acc_unseen.mean,
            agg.acc_unseen.std,
            agg.acc_seen.mean,
            agg.acc_seen.std,
            agg.harmonic.mean,
            agg.harmonic.std
        ));
    };
    for (name, doc) in entries {
        push_row(name, &doc.aggregate);
    }
    if entries.len() > 1 {
        push_row("merged", &merged_aggregate(entries));
    }
    out
}

//! One module per subcommand plus the report formatting they share.

pub mod ablate;
pub mod embed_stats;
pub mod eval;
pub mod gate_report;
pub mod gradcheck;
pub mod split;
pub mod train;

use crate::error::CliError;
use std::path::Path;
use xltk_core::data::LABELS;
use xltk_core::metrics::{BootstrapCi, MetricsReport};

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    CliError::io_at(dir, std::fs::create_dir_all(dir))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    let file = CliError::io_at(path, std::fs::File::create(path))?;
    Ok(csv::Writer::from_writer(file))
}

/// Metrics as CSV: one row per category, then one row per summary metric,
/// with interval columns filled where a bootstrap ran.
pub fn write_metrics_csv(
    path: &Path,
    report: &MetricsReport,
    cis: &[(&str, BootstrapCi)],
) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["name", "precision", "recall", "f1", "support", "value", "ci_lower", "ci_upper"])?;
    for (label, m) in LABELS.iter().zip(&report.per_category) {
        w.write_record([
            label.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string(),
            m.support.to_string(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    let ci_of = |name: &str| cis.iter().find(|(n, _)| *n == name).map(|(_, ci)| ci);
    for (name, value) in [
        ("macro_f1", report.macro_f1),
        ("micro_precision", report.micro_precision),
        ("micro_recall", report.micro_recall),
        ("micro_f1", report.micro_f1),
        ("exact_match", report.exact_match),
        ("hamming_loss", report.hamming_loss),
    ] {
        let (lo, hi) = ci_of(name)
            .map(|ci| (ci.lower.to_string(), ci.upper.to_string()))
            .unwrap_or_default();
        w.write_record([
            name.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            value.to_string(),
            lo,
            hi,
        ])?;
    }
    w.flush().map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn print_metrics_table(report: &MetricsReport, cis: &[(&str, BootstrapCi)]) {
    println!("{:<14} {:>9} {:>9} {:>9} {:>9}", "category", "precision", "recall", "f1", "support");
    for (label, m) in LABELS.iter().zip(&report.per_category) {
        println!(
            "{label:<14} {:>9.4} {:>9.4} {:>9.4} {:>9}",
            m.precision, m.recall, m.f1, m.support
        );
    }
    println!();
    println!("macro F1      {:.4}", report.macro_f1);
    println!(
        "micro P/R/F1  {:.4} / {:.4} / {:.4}",
        report.micro_precision, report.micro_recall, report.micro_f1
    );
    println!("exact match   {:.4}", report.exact_match);
    println!("hamming loss  {:.4}", report.hamming_loss);
    for (name, ci) in cis {
        println!(
            "{name} 95% CI   [{:.4}, {:.4}]  ({} replicates)",
            ci.lower, ci.upper, ci.iterations
        );
    }
}

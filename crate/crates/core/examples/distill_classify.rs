//! Train a ten-member ensemble on three Gaussian blobs, distil it four ways
//! and print the evaluation table.
//!
//!     cargo run --release --example distill_classify

use dirdistill::classify::{run_pipeline, ClassifyConfig, EvalMetrics};

fn row(name: &str, m: &EvalMetrics) {
    let knowledge = m
        .ood_auc_knowledge
        .map_or("-".to_string(), |v| format!("{v:.3}"));
    println!(
        "{name:<10} acc {:.3}  ece {:.3}  auc(total) {:.3}  auc(knowledge) {knowledge:>5}  prr {:.3}",
        m.accuracy, m.ece, m.ood_auc_total, m.prr
    );
}

fn main() -> dirdistill::Result<()> {
    let cfg = ClassifyConfig::default();
    let (report, _) = run_pipeline(&cfg)?;
    row("ensemble", &report.ensemble);
    row("single", &report.single);
    for s in &report.students {
        let first = s.loss_trace.first().copied().unwrap_or(f64::NAN);
        let last = s.loss_trace.last().copied().unwrap_or(f64::NAN);
        row(s.mode.name(), &s.metrics);
        println!("{:<10} loss {first:.4} -> {last:.4}", "");
    }
    Ok(())
}

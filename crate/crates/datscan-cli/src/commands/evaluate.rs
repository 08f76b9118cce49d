//! `datscan evaluate` — recompute every metric from a predictions file,
//! so externally produced scores get the same report as our own runs.

use super::{ensure_dir, write_json, write_text};
use crate::config::PipelineConfig;
use crate::errors::{Classify, CliError, CliResult, Failure};
use crate::plot::{render_curve, Reference};
use crate::report::{compute_summary, render_summary};
use anyhow::anyhow;
use datscan_core::metrics::{self, pr_curve, roc_curve};
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Predictions CSV with `subject_id,score,truth` rows.
    #[arg(long, value_name = "FILE")]
    pub predictions: PathBuf,
    /// Output directory (default: `<output_root>/evaluate`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

pub fn run(config: &PipelineConfig, args: &EvaluateArgs) -> CliResult<()> {
    let cfg = config.clone();
    cfg.validate().or_usage()?;

    let records = metrics::read_predictions(&args.predictions).or_data()?;
    if records.is_empty() {
        return Err(CliError::new(
            Failure::Data,
            anyhow!(
                "predictions file {} contains no records",
                args.predictions.display()
            ),
        ));
    }

    let summary = compute_summary(&records).or_data()?;
    let out = args.out.clone().unwrap_or_else(|| cfg.run_dir("evaluate"));
    ensure_dir(&out)?;
    write_json(&out.join("metrics.json"), &summary)?;

    let (scores, truths) = metrics::scores_and_truths(&records);
    let roc = roc_curve(&scores, &truths).or_data()?;
    let pr = pr_curve(&scores, &truths).or_data()?;
    metrics::write_curve(&out.join("roc.csv"), &roc, "fpr", "tpr").or_data()?;
    metrics::write_curve(&out.join("pr.csv"), &pr, "recall", "precision").or_data()?;
    if cfg.report.plots {
        for (points, reference, name) in
            [(&roc, Reference::Diagonal, "roc.png"), (&pr, Reference::None, "pr.png")]
        {
            if let Err(e) = render_curve(points, reference, &out.join(name)) {
                eprintln!("warning: could not render {name}: {e}");
            }
        }
    }

    let rendered = render_summary(&summary);
    write_text(&out.join("report.txt"), &rendered)?;
    cfg.echo_into(&out)?;

    print!("{rendered}");
    println!("report written to {}", out.display());
    Ok(())
}

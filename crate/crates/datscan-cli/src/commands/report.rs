//! `datscan report` — re-render the human-readable tables from a
//! finished run directory's JSON artifacts.

use crate::config::PipelineConfig;
use crate::errors::{Classify, CliError, CliResult, Failure};
use crate::report::{render_crossval, render_summary, CrossValReport, MetricsSummary};
use anyhow::{anyhow, Context};
use serde::de::DeserializeOwned;
use std::path::{Path, PathBuf};

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// Finished run directory containing crossval.json or metrics.json.
    #[arg(long, value_name = "DIR")]
    pub run: PathBuf,
}

pub fn run(_config: &PipelineConfig, args: &ReportArgs) -> CliResult<()> {
    let mut rendered_any = false;
    if let Some(report) = read_if_present::<CrossValReport>(&args.run.join("crossval.json"))? {
        print!("{}", render_crossval(&report));
        rendered_any = true;
    }
    if let Some(summary) = read_if_present::<MetricsSummary>(&args.run.join("metrics.json"))? {
        print!("{}", render_summary(&summary));
        rendered_any = true;
    }
    if !rendered_any {
        return Err(CliError::new(
            Failure::Data,
            anyhow!(
                "{} contains neither crossval.json nor metrics.json",
                args.run.display()
            ),
        ));
    }
    Ok(())
}

fn read_if_present<T: DeserializeOwned>(path: &Path) -> CliResult<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .or_data()?;
    serde_json::from_str(&text)
        .with_context(|| format!("invalid report artifact {}", path.display()))
        .or_data()
        .map(Some)
}

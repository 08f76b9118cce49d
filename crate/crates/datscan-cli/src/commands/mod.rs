//! One module per subcommand, plus helpers they all share.

pub mod crossval;
pub mod evaluate;
pub mod preprocess;
pub mod report;
pub mod split;
pub mod synth;
pub mod train;

use crate::errors::{Classify, CliError, CliResult, Failure};
use anyhow::Context;
use datscan_core::manifest::DatasetManifest;
use datscan_core::splits::SplitError;
use std::path::{Path, PathBuf};

/// File name of the dataset index inside every dataset directory.
pub const MANIFEST_NAME: &str = "manifest.csv";

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create directory {}", dir.display()))
        .or_data()
}

/// Load `<dir>/manifest.csv`.
pub fn load_manifest(dir: &Path) -> CliResult<DatasetManifest> {
    let path = dir.join(MANIFEST_NAME);
    DatasetManifest::load_csv(&path).or_data()
}

pub fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> CliResult<PathBuf> {
    let path = dir.join(MANIFEST_NAME);
    manifest.write_csv(&path).or_data()?;
    Ok(path)
}

/// Split planning rejects impossible requests (usage) and degenerate
/// datasets (data); keep the distinction for the exit code.
pub fn split_failure(err: SplitError) -> CliError {
    let failure = match &err {
        SplitError::BadFoldCount(_) | SplitError::BadFraction(_) => Failure::Usage,
        SplitError::TooFewSubjects { .. }
        | SplitError::DegenerateClass { .. }
        | SplitError::Unreconcilable { .. } => Failure::Data,
    };
    CliError::new(failure, err)
}

/// Write a JSON artifact with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .with_context(|| format!("cannot serialize {}", path.display()))
        .or_data()?;
    text.push('\n');
    std::fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .or_data()
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .or_data()
}

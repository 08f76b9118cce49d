//! `datscan split` — plan dataset splits without training anything.

use super::{ensure_dir, load_manifest, split_failure, write_json, write_text};
use crate::config::PipelineConfig;
use crate::errors::{Classify, CliResult};
use anyhow::Context;
use datscan_core::manifest::DatasetManifest;
use datscan_core::splits::{holdout_with_counts, stratified_holdout, stratified_kfold};
use datscan_core::ClassLabel;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, clap::Args)]
pub struct SplitArgs {
    #[command(subcommand)]
    pub mode: SplitMode,
}

#[derive(Debug, clap::Subcommand)]
pub enum SplitMode {
    /// Plan a stratified k-fold assignment.
    Kfold(KfoldArgs),
    /// Plan a stratified holdout split.
    Holdout(HoldoutArgs),
}

#[derive(Debug, clap::Args)]
pub struct KfoldArgs {
    /// Image dataset directory (default: `<data_root>/images`).
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    /// Output directory (default: `<output_root>/split`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "K")]
    pub folds: Option<usize>,
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
pub struct HoldoutArgs {
    /// Image dataset directory (default: `<data_root>/images`).
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    /// Output directory (default: `<output_root>/split`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "F")]
    pub test_fraction: Option<f64>,
    /// Explicit control-class test size (overrides the fraction).
    #[arg(long, value_name = "N", requires = "test_pd")]
    pub test_control: Option<usize>,
    /// Explicit PD-class test size (overrides the fraction).
    #[arg(long, value_name = "N", requires = "test_control")]
    pub test_pd: Option<usize>,
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Also copy the PNGs into `<out>/{train,test}/<class>/` trees.
    #[arg(long)]
    pub materialize: bool,
}

pub fn run(config: &PipelineConfig, args: &SplitArgs) -> CliResult<()> {
    match &args.mode {
        SplitMode::Kfold(args) => run_kfold(config, args),
        SplitMode::Holdout(args) => run_holdout(config, args),
    }
}

fn run_kfold(config: &PipelineConfig, args: &KfoldArgs) -> CliResult<()> {
    let mut cfg = config.clone();
    if let Some(k) = args.folds {
        cfg.split.folds = k;
    }
    if let Some(seed) = args.seed {
        cfg.split.seed = seed;
    }
    cfg.validate().or_usage()?;

    let images = args.images.clone().unwrap_or_else(|| cfg.images_dir());
    let out = args.out.clone().unwrap_or_else(|| cfg.run_dir("split"));
    let manifest = load_manifest(&images)?;
    let folds =
        stratified_kfold(&manifest, cfg.split.folds, cfg.split.seed).map_err(split_failure)?;

    ensure_dir(&out)?;
    write_json(&out.join("folds.json"), &folds)?;
    let mut csv = String::from("subject_id,fold\n");
    for fold in &folds {
        for id in &fold.val {
            let _ = writeln!(csv, "{id},{}", fold.fold);
        }
    }
    write_text(&out.join("folds.csv"), &csv)?;
    cfg.echo_into(&out)?;

    println!(
        "planned {} folds over {} subjects into {}",
        folds.len(),
        manifest.len(),
        out.display()
    );
    for fold in &folds {
        let classes = class_counts(&manifest, &fold.val)?;
        println!(
            "  fold {}: train {} / val {} ({} control, {} pd)",
            fold.fold,
            fold.train.len(),
            fold.val.len(),
            classes.0,
            classes.1
        );
    }
    Ok(())
}

fn run_holdout(config: &PipelineConfig, args: &HoldoutArgs) -> CliResult<()> {
    let mut cfg = config.clone();
    if let Some(f) = args.test_fraction {
        cfg.split.test_fraction = f;
    }
    if args.test_control.is_some() {
        cfg.split.test_control = args.test_control;
        cfg.split.test_pd = args.test_pd;
    }
    if let Some(seed) = args.seed {
        cfg.split.seed = seed;
    }
    cfg.validate().or_usage()?;

    let images = args.images.clone().unwrap_or_else(|| cfg.images_dir());
    let out = args.out.clone().unwrap_or_else(|| cfg.run_dir("split"));
    let manifest = load_manifest(&images)?;
    let split = plan_holdout(&cfg, &manifest)?;

    ensure_dir(&out)?;
    let train = manifest.subset(split.train.iter().map(String::as_str)).or_data()?;
    let test = manifest.subset(split.test.iter().map(String::as_str)).or_data()?;
    train.write_csv(&out.join("train.csv")).or_data()?;
    test.write_csv(&out.join("test.csv")).or_data()?;
    write_json(&out.join("split.json"), &split)?;
    if args.materialize {
        materialize(&images, &out.join("train"), &train)?;
        materialize(&images, &out.join("test"), &test)?;
    }
    cfg.echo_into(&out)?;

    println!(
        "planned holdout split of {} subjects into {}",
        manifest.len(),
        out.display()
    );
    for (name, part) in [("train", &train), ("test", &test)] {
        println!(
            "  {name}: {} ({} control, {} pd)",
            part.len(),
            part.class_count(ClassLabel::Control),
            part.class_count(ClassLabel::Pd)
        );
    }
    Ok(())
}

/// Run the configured holdout: explicit per-class counts when both are
/// set, the stratified fraction otherwise.
pub fn plan_holdout(
    cfg: &PipelineConfig,
    manifest: &DatasetManifest,
) -> CliResult<datscan_core::splits::HoldoutSplit> {
    let split = match (cfg.split.test_control, cfg.split.test_pd) {
        (Some(control), Some(pd)) => holdout_with_counts(manifest, control, pd, cfg.split.seed),
        _ => stratified_holdout(manifest, cfg.split.test_fraction, cfg.split.seed),
    };
    split.map_err(split_failure)
}

fn class_counts(manifest: &DatasetManifest, ids: &[String]) -> CliResult<(usize, usize)> {
    let subset = manifest.subset(ids.iter().map(String::as_str)).or_data()?;
    Ok((
        subset.class_count(ClassLabel::Control),
        subset.class_count(ClassLabel::Pd),
    ))
}

/// Copy the split's PNGs into a class-per-subdirectory tree with its
/// own manifest, so the result is a loadable dataset directory.
fn materialize(images: &Path, dest: &Path, manifest: &DatasetManifest) -> CliResult<()> {
    for label in ClassLabel::ALL {
        ensure_dir(&dest.join(label.as_str()))?;
    }
    for entry in manifest.entries() {
        let from = images.join(&entry.relative_path);
        let to = dest.join(&entry.relative_path);
        std::fs::copy(&from, &to)
            .with_context(|| format!("cannot copy {} to {}", from.display(), to.display()))
            .or_data()?;
    }
    super::write_manifest(dest, manifest)?;
    Ok(())
}

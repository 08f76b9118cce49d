//! `datscan crossval` — stratified k-fold cross-validation harness.

use super::{ensure_dir, load_manifest, split_failure, write_json, write_text};
use crate::config::PipelineConfig;
use crate::errors::{Classify, CliError, CliResult, Failure};
use crate::report::{crossval_csv, render_crossval, CrossValReport, FoldRow};
use anyhow::anyhow;
use datscan_core::manifest::DatasetManifest;
use datscan_core::model::{train, Classifier, LabeledImageSet};
use datscan_core::rng::seed_for;
use datscan_core::splits::{stratified_kfold, FoldSplit};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// Stream tag separating per-fold model seeds from the base seed.
const STREAM_CV_FOLD: u64 = 0x4356_464c;

#[derive(Debug, clap::Args)]
pub struct CrossvalArgs {
    /// Image dataset directory (default: `<data_root>/images`).
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    /// Output directory (default: `<output_root>/crossval`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "K")]
    pub folds: Option<usize>,
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Base training seed; fold `i` trains with a stream derived from it.
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Seed of the fold assignment itself.
    #[arg(long, value_name = "SEED")]
    pub split_seed: Option<u64>,
    #[arg(long, value_name = "NAME")]
    pub backbone: Option<String>,
    /// Train only the classification head.
    #[arg(long)]
    pub freeze_backbone: bool,
    /// Disable training-time augmentation.
    #[arg(long)]
    pub no_augment: bool,
    /// Train the folds in parallel; rows are still merged in fold order.
    #[arg(long)]
    pub parallel: bool,
}

impl CrossvalArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(k) = self.folds {
            cfg.split.folds = k;
        }
        if let Some(n) = self.epochs {
            cfg.train.epochs = n;
        }
        if let Some(n) = self.batch_size {
            cfg.train.batch_size = n;
        }
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(seed) = self.split_seed {
            cfg.split.seed = seed;
        }
        if let Some(backbone) = &self.backbone {
            cfg.train.backbone = backbone.clone();
        }
        if self.freeze_backbone {
            cfg.train.freeze_backbone = true;
        }
        if self.no_augment {
            cfg.augment.enabled = false;
        }
    }
}

pub fn run(config: &PipelineConfig, args: &CrossvalArgs) -> CliResult<()> {
    let mut cfg = config.clone();
    args.apply(&mut cfg);
    cfg.validate().or_usage()?;

    let images = args.images.clone().unwrap_or_else(|| cfg.images_dir());
    let out = args.out.clone().unwrap_or_else(|| cfg.run_dir("crossval"));
    let manifest = load_manifest(&images)?;
    let folds =
        stratified_kfold(&manifest, cfg.split.folds, cfg.split.seed).map_err(split_failure)?;

    println!(
        "cross-validating {} subjects over {} folds ({})",
        manifest.len(),
        folds.len(),
        if args.parallel { "parallel" } else { "sequential" }
    );

    let run_fold = |fold: &FoldSplit| run_one_fold(&cfg, &images, &manifest, fold);
    let rows: Vec<FoldRow> = if args.parallel {
        folds.par_iter().map(run_fold).collect::<CliResult<_>>()?
    } else {
        folds
            .iter()
            .map(|fold| {
                let row = run_fold(fold)?;
                println!(
                    "  fold {}: train loss {:.4} acc {:.4} | val loss {:.4} acc {:.4}",
                    row.fold, row.train_loss, row.train_accuracy, row.val_loss, row.val_accuracy
                );
                Ok(row)
            })
            .collect::<CliResult<_>>()?
    };

    let report = CrossValReport::from_rows(rows).or_data()?;
    ensure_dir(&out)?;
    write_json(&out.join("crossval.json"), &report)?;
    write_text(&out.join("crossval.csv"), &crossval_csv(&report))?;
    let rendered = render_crossval(&report);
    write_text(&out.join("report.txt"), &rendered)?;
    cfg.echo_into(&out)?;

    print!("{rendered}");
    println!("report written to {}", out.display());
    Ok(())
}

/// Train one fold's model from scratch and score its held-out part.
fn run_one_fold(
    cfg: &PipelineConfig,
    images: &Path,
    manifest: &DatasetManifest,
    fold: &FoldSplit,
) -> CliResult<FoldRow> {
    let seed = seed_for(cfg.train.seed, &[STREAM_CV_FOLD, fold.fold as u64]);
    let train_manifest = manifest
        .subset(fold.train.iter().map(String::as_str))
        .or_data()?;
    let val_manifest = manifest
        .subset(fold.val.iter().map(String::as_str))
        .or_data()?;
    let train_set = LabeledImageSet::load(images, &train_manifest).or_data()?;
    let val_set = LabeledImageSet::load(images, &val_manifest).or_data()?;

    let mut model =
        Classifier::from_seed(&cfg.train.backbone, cfg.train.head_config(), seed).or_usage()?;
    let mut train_cfg = cfg.train_config();
    train_cfg.seed = seed;

    let history = train(&mut model, &train_set, Some(&val_set), &train_cfg).map_err(|e| {
        CliError::new(
            Failure::Training,
            anyhow!("fold {} failed: {e}", fold.fold + 1),
        )
    })?;
    let last = history
        .epochs
        .last()
        .expect("at least one epoch was validated");
    let val = history
        .validation
        .expect("a validation set was supplied");
    Ok(FoldRow {
        fold: fold.fold + 1,
        seed,
        train_size: train_set.len(),
        val_size: val_set.len(),
        train_loss: last.train_loss,
        train_accuracy: last.train_accuracy,
        val_loss: val.loss,
        val_accuracy: val.accuracy,
    })
}

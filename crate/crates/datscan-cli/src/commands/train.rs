//! `datscan train` — fit the final model and score the held-out test
//! set, emitting the checkpoint, predictions, metrics, curves and the
//! rendered report.

use super::split::plan_holdout;
use super::{ensure_dir, load_manifest, write_json, write_text};
use crate::config::PipelineConfig;
use crate::errors::{Classify, CliError, CliResult, Failure};
use crate::plot::{render_curve, Reference};
use crate::report::{compute_summary, render_summary};
use datscan_core::metrics::{self, pr_curve, roc_curve};
use datscan_core::model::{
    load_backbone_weights, predict, save_checkpoint, train_with_progress, CheckpointError,
    Classifier, LabeledImageSet,
};
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Image dataset directory to carve a stratified holdout from
    /// (default: `<data_root>/images`).
    #[arg(long, value_name = "DIR", conflicts_with_all = ["train_images", "test_images"])]
    pub images: Option<PathBuf>,
    /// Pre-split training image directory.
    #[arg(long, value_name = "DIR", requires = "test_images")]
    pub train_images: Option<PathBuf>,
    /// Pre-split test image directory.
    #[arg(long, value_name = "DIR", requires = "train_images")]
    pub test_images: Option<PathBuf>,
    /// Output directory (default: `<output_root>/train`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Training seed (weight init, shuffling, dropout, augmentation).
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Seed of the holdout assignment.
    #[arg(long, value_name = "SEED")]
    pub split_seed: Option<u64>,
    #[arg(long, value_name = "F")]
    pub test_fraction: Option<f64>,
    /// Explicit control-class test size (overrides the fraction).
    #[arg(long, value_name = "N", requires = "test_pd")]
    pub test_control: Option<usize>,
    /// Explicit PD-class test size (overrides the fraction).
    #[arg(long, value_name = "N", requires = "test_control")]
    pub test_pd: Option<usize>,
    #[arg(long, value_name = "NAME")]
    pub backbone: Option<String>,
    /// Train only the classification head.
    #[arg(long)]
    pub freeze_backbone: bool,
    /// Disable training-time augmentation.
    #[arg(long)]
    pub no_augment: bool,
    /// Initialize the backbone from a saved checkpoint before training.
    #[arg(long, value_name = "FILE")]
    pub init_backbone: Option<PathBuf>,
}

impl TrainArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
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
        if let Some(f) = self.test_fraction {
            cfg.split.test_fraction = f;
        }
        if self.test_control.is_some() {
            cfg.split.test_control = self.test_control;
            cfg.split.test_pd = self.test_pd;
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

pub fn run(config: &PipelineConfig, args: &TrainArgs) -> CliResult<()> {
    let mut cfg = config.clone();
    args.apply(&mut cfg);
    cfg.validate().or_usage()?;

    let out = args.out.clone().unwrap_or_else(|| cfg.run_dir("train"));
    ensure_dir(&out)?;

    // Assemble the train/test sets: either two pre-split directories or
    // a fresh stratified holdout carved from one directory.
    let (train_set, test_set) = match (&args.train_images, &args.test_images) {
        (Some(train_dir), Some(test_dir)) => {
            let train_manifest = load_manifest(train_dir)?;
            let test_manifest = load_manifest(test_dir)?;
            let train_set = LabeledImageSet::load(train_dir, &train_manifest).or_data()?;
            let test_set = LabeledImageSet::load(test_dir, &test_manifest).or_data()?;
            (train_set, test_set)
        }
        _ => {
            let images = args.images.clone().unwrap_or_else(|| cfg.images_dir());
            let manifest = load_manifest(&images)?;
            let split = plan_holdout(&cfg, &manifest)?;
            write_json(&out.join("split.json"), &split)?;
            let train_manifest = manifest
                .subset(split.train.iter().map(String::as_str))
                .or_data()?;
            let test_manifest = manifest
                .subset(split.test.iter().map(String::as_str))
                .or_data()?;
            let train_set = LabeledImageSet::load(&images, &train_manifest).or_data()?;
            let test_set = LabeledImageSet::load(&images, &test_manifest).or_data()?;
            (train_set, test_set)
        }
    };
    println!(
        "training on {} images, holding out {} for the test set",
        train_set.len(),
        test_set.len()
    );

    let mut model =
        Classifier::from_seed(&cfg.train.backbone, cfg.train.head_config(), cfg.train.seed)
            .or_usage()?;
    if let Some(checkpoint) = &args.init_backbone {
        load_backbone_weights(&mut model, checkpoint).or_data()?;
    }

    let train_cfg = cfg.train_config();
    let total = train_cfg.epochs;
    let history = train_with_progress(&mut model, &train_set, None, &train_cfg, |stats| {
        eprintln!(
            "epoch {:>4}/{total}  lr {:.2e}  loss {:.4}  acc {:.4}",
            stats.epoch + 1,
            stats.lr,
            stats.train_loss,
            stats.train_accuracy
        );
    })
    .or_training()?;
    write_json(&out.join("history.json"), &history)?;

    save_checkpoint(&mut model, &out.join("checkpoint.json")).map_err(|e| match &e {
        CheckpointError::NonFinite { .. } => CliError::new(Failure::Training, e),
        _ => CliError::new(Failure::Data, e),
    })?;

    let records = predict(&mut model, &test_set, cfg.train.batch_size);
    metrics::write_predictions(&out.join("predictions.csv"), &records).or_data()?;

    let summary = compute_summary(&records).or_data()?;
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
    println!("artifacts written to {}", out.display());
    Ok(())
}

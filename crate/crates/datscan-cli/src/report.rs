//! Report data model shared by `train`, `crossval`, `evaluate` and
//! `report`: the full metric summary of a scored prediction set and the
//! per-fold cross-validation table with its weighted aggregates.

use datscan_core::metrics::{
    self, average_precision, roc_auc, ConfusionMatrix, MetricsError, PredictionRecord,
};
use datscan_core::model::bce_loss;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Every evaluation metric recomputable from scores and truths alone.
/// `precision` is the one ratio that can be undefined on a valid
/// prediction set (no predicted positives), hence the `Option`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n: usize,
    pub true_positives: usize,
    pub true_negatives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: Option<f64>,
    pub roc_auc: f64,
    pub pr_auc: f64,
}

/// Threshold used to binarize scores for the confusion matrix.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Compute the full summary from prediction records. Requires at least
/// one record of each class (the ranking metrics are undefined
/// otherwise).
pub fn compute_summary(records: &[PredictionRecord]) -> Result<MetricsSummary, MetricsError> {
    let (scores, truths) = metrics::scores_and_truths(records);
    let targets: Vec<f64> = truths.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    // The ranking metrics carry the strictest preconditions; computing
    // them first yields the clearest error on degenerate input.
    let roc_auc = roc_auc(&scores, &truths)?;
    let pr_auc = average_precision(&scores, &truths)?;
    let confusion = ConfusionMatrix::from_scores(&scores, &truths, DECISION_THRESHOLD)?;
    Ok(MetricsSummary {
        n: records.len(),
        true_positives: confusion.true_positives,
        true_negatives: confusion.true_negatives,
        false_positives: confusion.false_positives,
        false_negatives: confusion.false_negatives,
        accuracy: confusion.accuracy()?,
        loss: bce_loss(&scores, &targets),
        sensitivity: confusion.sensitivity()?,
        specificity: confusion.specificity()?,
        precision: confusion.precision().ok(),
        roc_auc,
        pr_auc,
    })
}

/// Render the final-model table.
pub fn render_summary(s: &MetricsSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Final model performance on the test set (n = {})", s.n);
    let _ = writeln!(out);
    let precision = match s.precision {
        Some(p) => format!("{p:.4}"),
        None => "n/a".to_string(),
    };
    let rows: [(&str, String); 11] = [
        ("Test Accuracy", format!("{:.4}", s.accuracy)),
        ("Test Loss", format!("{:.4}", s.loss)),
        ("PR (AUC)", format!("{:.4}", s.pr_auc)),
        ("ROC (AUC)", format!("{:.4}", s.roc_auc)),
        ("True Positives", s.true_positives.to_string()),
        ("True Negatives", s.true_negatives.to_string()),
        ("False Positives", s.false_positives.to_string()),
        ("False Negatives", s.false_negatives.to_string()),
        ("Sensitivity", format!("{:.4}", s.sensitivity)),
        ("Specificity", format!("{:.4}", s.specificity)),
        ("Precision", precision),
    ];
    for (name, value) in rows {
        let _ = writeln!(out, "  {name:<16} {value:>8}");
    }
    out
}

/// One completed cross-validation fold. `fold` is 1-based to match the
/// rendered table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub fold: usize,
    pub seed: u64,
    pub train_size: usize,
    pub val_size: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// The four tracked series, aggregated one way or another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub folds: Vec<FoldRow>,
    /// Means weighted by validation-set size.
    pub weighted_mean: SeriesStats,
    pub sample_stddev: SeriesStats,
    pub population_stddev: SeriesStats,
}

impl CrossValReport {
    /// Aggregate fold rows; the weights are the validation sizes.
    pub fn from_rows(folds: Vec<FoldRow>) -> Result<Self, MetricsError> {
        let weights: Vec<f64> = folds.iter().map(|f| f.val_size as f64).collect();
        let series = |pick: fn(&FoldRow) -> f64| -> Vec<f64> { folds.iter().map(pick).collect() };
        let aggregate = |stat: &dyn Fn(&[f64]) -> Result<f64, MetricsError>| {
            Ok::<SeriesStats, MetricsError>(SeriesStats {
                train_loss: stat(&series(|f| f.train_loss))?,
                train_accuracy: stat(&series(|f| f.train_accuracy))?,
                val_loss: stat(&series(|f| f.val_loss))?,
                val_accuracy: stat(&series(|f| f.val_accuracy))?,
            })
        };
        let weighted_mean = aggregate(&|v| metrics::weighted_mean(v, &weights))?;
        let sample_stddev = aggregate(&|v| metrics::sample_stddev(v))?;
        let population_stddev = aggregate(&|v| metrics::population_stddev(v))?;
        Ok(CrossValReport {
            folds,
            weighted_mean,
            sample_stddev,
            population_stddev,
        })
    }
}

/// Render the per-fold cross-validation table.
pub fn render_crossval(report: &CrossValReport) -> String {
    let mut out = String::new();
    let k = report.folds.len();
    let _ = writeln!(out, "{k}-fold cross-validation results");
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "  {:<20} {:>10} {:>10} {:>10} {:>10} {:>7}",
        "Fold", "Train Loss", "Train Acc", "Val Loss", "Val Acc", "Val N"
    );
    for f in &report.folds {
        let _ = writeln!(
            out,
            "  {:<20} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>7}",
            f.fold, f.train_loss, f.train_accuracy, f.val_loss, f.val_accuracy, f.val_size
        );
    }
    let rows = [
        ("Weighted mean", &report.weighted_mean),
        ("Sample stddev", &report.sample_stddev),
        ("Population stddev", &report.population_stddev),
    ];
    for (name, s) in rows {
        let _ = writeln!(
            out,
            "  {:<20} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            name, s.train_loss, s.train_accuracy, s.val_loss, s.val_accuracy
        );
    }
    out
}

/// Serialize the fold rows as CSV for spreadsheet consumption.
pub fn crossval_csv(report: &CrossValReport) -> String {
    let mut out =
        String::from("fold,seed,train_size,val_size,train_loss,train_accuracy,val_loss,val_accuracy\n");
    for f in &report.folds {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            f.fold,
            f.seed,
            f.train_size,
            f.val_size,
            f.train_loss,
            f.train_accuracy,
            f.val_loss,
            f.val_accuracy
        );
    }
    out
}

//! Binary classification metrics.
//!
//! Scores are probabilities of the positive (parkinsonian) class; a
//! subject is called positive when its score is at or above the
//! threshold. Curve construction sweeps the distinct observed scores in
//! descending order, prepending an infinite-threshold sentinel, so tied
//! scores enter in one step: the ROC then gets a diagonal segment whose
//! trapezoid area equals the half-credit tie convention of the rank-sum
//! formulation. Every ratio with an empty denominator is an error, not
//! a NaN — a test set with one class missing should fail loudly.

use crate::label::ClassLabel;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("score and truth lengths differ: {scores} vs {truths}")]
    LengthMismatch { scores: usize, truths: usize },
    #[error("no samples")]
    Empty,
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("sensitivity is undefined: no positive subjects")]
    NoPositiveTruth,
    #[error("specificity is undefined: no negative subjects")]
    NoNegativeTruth,
    #[error("precision is undefined: no predicted positives")]
    NoPositivePredictions,
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("weights must be positive and match values: {0}")]
    BadWeights(String),
    #[error("i/o error on {path:?}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path:?} line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// Counts of the four outcomes of thresholded binary prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct ConfusionMatrix {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        ConfusionMatrix {
            true_positives: tp,
            false_positives: fp,
            true_negatives: tn,
            false_negatives: fn_,
        }
    }

    /// Tally score-vs-threshold calls against the truth; `score >=
    /// threshold` predicts positive.
    pub fn from_scores(
        scores: &[f64],
        truths: &[bool],
        threshold: f64,
    ) -> Result<Self, MetricsError> {
        check_paired(scores, truths)?;
        let mut m = ConfusionMatrix::default();
        for (&s, &t) in scores.iter().zip(truths) {
            match (s >= threshold, t) {
                (true, true) => m.true_positives += 1,
                (true, false) => m.false_positives += 1,
                (false, false) => m.true_negatives += 1,
                (false, true) => m.false_negatives += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    /// TP / (TP + FN).
    pub fn sensitivity(&self) -> Result<f64, MetricsError> {
        let denom = self.true_positives + self.false_negatives;
        if denom == 0 {
            return Err(MetricsError::NoPositiveTruth);
        }
        Ok(self.true_positives as f64 / denom as f64)
    }

    /// TN / (TN + FP).
    pub fn specificity(&self) -> Result<f64, MetricsError> {
        let denom = self.true_negatives + self.false_positives;
        if denom == 0 {
            return Err(MetricsError::NoNegativeTruth);
        }
        Ok(self.true_negatives as f64 / denom as f64)
    }

    /// TP / (TP + FP).
    pub fn precision(&self) -> Result<f64, MetricsError> {
        let denom = self.true_positives + self.false_positives;
        if denom == 0 {
            return Err(MetricsError::NoPositivePredictions);
        }
        Ok(self.true_positives as f64 / denom as f64)
    }

    /// (TP + TN) / total.
    pub fn accuracy(&self) -> Result<f64, MetricsError> {
        let total = self.total();
        if total == 0 {
            return Err(MetricsError::Empty);
        }
        Ok((self.true_positives + self.true_negatives) as f64 / total as f64)
    }
}

/// One operating point of a threshold sweep. For ROC curves `x` is the
/// false-positive rate and `y` the true-positive rate; for PR curves
/// `x` is recall and `y` precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

fn check_paired(scores: &[f64], truths: &[bool]) -> Result<(), MetricsError> {
    if scores.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            truths: truths.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    Ok(())
}

/// Cumulative (threshold, tp, fp) after each distinct descending score.
fn threshold_sweep(scores: &[f64], truths: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut sweep = Vec::new();
    let mut tp = 0;
    let mut fp = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truths[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        sweep.push((s, tp, fp));
    }
    sweep
}

/// ROC operating points from the infinite-threshold sentinel `(0, 0)`
/// down through every distinct score. Needs both classes present.
pub fn roc_curve(scores: &[f64], truths: &[bool]) -> Result<Vec<CurvePoint>, MetricsError> {
    check_paired(scores, truths)?;
    let pos = truths.iter().filter(|&&t| t).count();
    let neg = truths.len() - pos;
    if pos == 0 {
        return Err(MetricsError::NoPositiveTruth);
    }
    if neg == 0 {
        return Err(MetricsError::NoNegativeTruth);
    }

    let mut points = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    for (threshold, tp, fp) in threshold_sweep(scores, truths) {
        points.push(CurvePoint {
            threshold,
            x: fp as f64 / neg as f64,
            y: tp as f64 / pos as f64,
        });
    }
    Ok(points)
}

/// Area under the ROC curve by trapezoidal integration.
pub fn roc_auc(scores: &[f64], truths: &[bool]) -> Result<f64, MetricsError> {
    let points = roc_curve(scores, truths)?;
    let mut auc = 0.0;
    for pair in points.windows(2) {
        auc += (pair[1].x - pair[0].x) * (pair[1].y + pair[0].y) / 2.0;
    }
    Ok(auc)
}

/// Precision-recall operating points, starting from the conventional
/// `(recall 0, precision 1)` sentinel. Needs at least one positive.
pub fn pr_curve(scores: &[f64], truths: &[bool]) -> Result<Vec<CurvePoint>, MetricsError> {
    check_paired(scores, truths)?;
    let pos = truths.iter().filter(|&&t| t).count();
    if pos == 0 {
        return Err(MetricsError::NoPositiveTruth);
    }

    let mut points = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 1.0,
    }];
    for (threshold, tp, fp) in threshold_sweep(scores, truths) {
        points.push(CurvePoint {
            threshold,
            x: tp as f64 / pos as f64,
            y: tp as f64 / (tp + fp) as f64,
        });
    }
    Ok(points)
}

/// Area under the PR curve as average precision: the step-wise sum of
/// `precision * recall-increment` over descending thresholds.
pub fn average_precision(scores: &[f64], truths: &[bool]) -> Result<f64, MetricsError> {
    let points = pr_curve(scores, truths)?;
    let mut ap = 0.0;
    for pair in points.windows(2) {
        ap += (pair[1].x - pair[0].x) * pair[1].y;
    }
    Ok(ap)
}

/// Mean of `values` weighted by `weights` (all weights must be
/// positive).
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Result<f64, MetricsError> {
    if values.len() != weights.len() {
        return Err(MetricsError::BadWeights(format!(
            "{} values vs {} weights",
            values.len(),
            weights.len()
        )));
    }
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(MetricsError::BadWeights(format!("weight {w} is not positive")));
    }
    let total: f64 = weights.iter().sum();
    Ok(values
        .iter()
        .zip(weights)
        .map(|(v, w)| v * w)
        .sum::<f64>()
        / total)
}

/// Standard deviation with the n−1 (Bessel) denominator.
pub fn sample_stddev(values: &[f64]) -> Result<f64, MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::TooFewValues {
            needed: 2,
            got: values.len(),
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((ss / (n - 1.0)).sqrt())
}

/// Standard deviation with the n denominator.
pub fn population_stddev(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((ss / n).sqrt())
}

/// One scored subject with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub subject_id: String,
    pub score: f64,
    pub truth: ClassLabel,
}

impl PredictionRecord {
    pub fn is_positive(&self) -> bool {
        self.truth.is_positive()
    }
}

/// Split records into paired score/truth slices for the metric functions.
pub fn scores_and_truths(records: &[PredictionRecord]) -> (Vec<f64>, Vec<bool>) {
    (
        records.iter().map(|r| r.score).collect(),
        records.iter().map(|r| r.is_positive()).collect(),
    )
}

pub const PREDICTIONS_HEADER: &str = "subject_id,score,truth";

/// Write `subject_id,score,truth` rows. Scores use the shortest
/// round-trippable decimal form.
pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<(), MetricsError> {
    let mut out = String::from(PREDICTIONS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{},{}\n", r.subject_id, r.score, r.truth));
    }
    std::fs::write(path, out).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |line: usize, reason: String| MetricsError::Parse {
        path: path.to_path_buf(),
        line: line + 1,
        reason,
    };

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == PREDICTIONS_HEADER => {}
        Some((_, header)) => {
            return Err(parse_err(0, format!("expected header {PREDICTIONS_HEADER:?}, found {header:?}")))
        }
        None => return Err(parse_err(0, "empty file".into())),
    }

    let mut records = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [subject_id, score, truth] = fields[..] else {
            return Err(parse_err(
                lineno,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        };
        let score: f64 = score
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad score {score:?}: {e}")))?;
        let truth: ClassLabel = truth
            .parse()
            .map_err(|e: crate::label::ParseLabelError| parse_err(lineno, e.to_string()))?;
        records.push(PredictionRecord {
            subject_id: subject_id.to_string(),
            score,
            truth,
        });
    }
    Ok(records)
}

/// Write a curve as `threshold,<x>,<y>` CSV; the sentinel threshold
/// serializes as `inf`.
pub fn write_curve(
    path: &Path,
    points: &[CurvePoint],
    x_name: &str,
    y_name: &str,
) -> Result<(), MetricsError> {
    let mut out = format!("threshold,{x_name},{y_name}\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.x, p.y));
    }
    std::fs::write(path, out).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |line: usize, reason: String| MetricsError::Parse {
        path: path.to_path_buf(),
        line: line + 1,
        reason,
    };

    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue; // header carries the axis names, not data
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [threshold, x, y] = fields[..] else {
            return Err(parse_err(
                lineno,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        };
        let parse_f = |s: &str| -> Result<f64, MetricsError> {
            s.parse()
                .map_err(|e| parse_err(lineno, format!("bad number {s:?}: {e}")))
        };
        points.push(CurvePoint {
            threshold: parse_f(threshold)?,
            x: parse_f(x)?,
            y: parse_f(y)?,
        });
    }
    Ok(points)
}

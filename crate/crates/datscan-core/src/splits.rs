//! Deterministic stratified splits.
//!
//! Both splitters work the same way: subject ids are grouped by class,
//! each class is shuffled with its own seeded stream, and members are
//! then dealt (k-fold) or counted off (holdout). Reshuffling one class
//! never perturbs the other, and the same `(manifest, k or fraction,
//! seed)` always yields the same membership on every platform. Returned
//! id lists are ordered by manifest position, not shuffle order, so
//! downstream iteration order is stable too.

use crate::label::ClassLabel;
use crate::manifest::DatasetManifest;
use crate::rng::{hash_str, rng_from_seed, seed_for};
use rand::seq::SliceRandom;
use std::collections::HashMap;

const STREAM_KFOLD: u64 = 0x4b46_4f4c;
const STREAM_HOLDOUT: u64 = 0x484f_4c44;

/// One cross-validation fold: `val` is the held-out part, `train` the rest.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HoldoutSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("fold count must be at least 2, got {0}")]
    BadFoldCount(usize),
    #[error("class {label} has {count} subjects, fewer than {k} folds")]
    TooFewSubjects {
        label: ClassLabel,
        count: usize,
        k: usize,
    },
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error(
        "split leaves class {label} with {test} of {total} subjects in the test set; \
         both sides need at least one"
    )]
    DegenerateClass {
        label: ClassLabel,
        test: usize,
        total: usize,
    },
    #[error("cannot reconcile per-class test counts with the overall test size {target}")]
    Unreconcilable { target: usize },
}

/// Round to nearest, halves up.
pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

fn shuffled_class(
    manifest: &DatasetManifest,
    label: ClassLabel,
    seed: u64,
    stream: u64,
) -> Vec<String> {
    let mut ids: Vec<String> = manifest
        .class_subjects(label)
        .into_iter()
        .map(str::to_string)
        .collect();
    let mut rng = rng_from_seed(seed_for(seed, &[stream, hash_str(label.as_str())]));
    ids.shuffle(&mut rng);
    ids
}

fn in_manifest_order(manifest: &DatasetManifest, ids: Vec<String>) -> Vec<String> {
    let position: HashMap<&str, usize> = manifest
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.subject_id.as_str(), i))
        .collect();
    let mut ids = ids;
    ids.sort_by_key(|id| position[id.as_str()]);
    ids
}

/// Stratified k-fold assignment: within each class, shuffled subjects
/// are dealt round-robin, so per-class fold sizes differ by at most one
/// and every fold's class mix tracks the full dataset's.
pub fn stratified_kfold(
    manifest: &DatasetManifest,
    k: usize,
    seed: u64,
) -> Result<Vec<FoldSplit>, SplitError> {
    if k < 2 {
        return Err(SplitError::BadFoldCount(k));
    }
    for label in ClassLabel::ALL {
        let count = manifest.class_count(label);
        if count < k {
            return Err(SplitError::TooFewSubjects { label, count, k });
        }
    }

    let mut folds: Vec<Vec<String>> = vec![Vec::new(); k];
    for label in ClassLabel::ALL {
        for (i, id) in shuffled_class(manifest, label, seed, STREAM_KFOLD)
            .into_iter()
            .enumerate()
        {
            folds[i % k].push(id);
        }
    }

    let all_ids: Vec<&str> = manifest
        .entries()
        .iter()
        .map(|e| e.subject_id.as_str())
        .collect();
    Ok(folds
        .into_iter()
        .enumerate()
        .map(|(fold, val)| {
            let val = in_manifest_order(manifest, val);
            let held: std::collections::HashSet<&str> =
                val.iter().map(String::as_str).collect();
            let train = all_ids
                .iter()
                .filter(|id| !held.contains(**id))
                .map(|id| id.to_string())
                .collect();
            FoldSplit { fold, train, val }
        })
        .collect())
}

/// Stratified holdout with per-class test sizes `round(fraction * n_c)`,
/// reconciled against the overall target `round(fraction * n)` by
/// adjusting the largest class.
pub fn stratified_holdout(
    manifest: &DatasetManifest,
    test_fraction: f64,
    seed: u64,
) -> Result<HoldoutSplit, SplitError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SplitError::BadFraction(test_fraction));
    }

    let mut counts: Vec<(ClassLabel, usize)> = ClassLabel::ALL
        .iter()
        .map(|&label| {
            let n = manifest.class_count(label);
            (label, round_half_up(test_fraction * n as f64))
        })
        .collect();

    let target = round_half_up(test_fraction * manifest.len() as f64);
    let current: usize = counts.iter().map(|(_, c)| c).sum();
    if current != target {
        let (largest, _) = ClassLabel::ALL
            .iter()
            .map(|&label| (label, manifest.class_count(label)))
            .max_by_key(|&(label, n)| (n, std::cmp::Reverse(label as usize)))
            .expect("at least one class");
        let slot = counts
            .iter_mut()
            .find(|(label, _)| *label == largest)
            .expect("class present");
        let adjusted = slot.1 as i64 + target as i64 - current as i64;
        if adjusted < 0 || adjusted as usize > manifest.class_count(largest) {
            return Err(SplitError::Unreconcilable { target });
        }
        slot.1 = adjusted as usize;
    }

    holdout_with_counts(
        manifest,
        counts[0].1, // control
        counts[1].1, // pd
        seed,
    )
}

/// Stratified holdout with explicit per-class test-set sizes.
pub fn holdout_with_counts(
    manifest: &DatasetManifest,
    test_control: usize,
    test_pd: usize,
    seed: u64,
) -> Result<HoldoutSplit, SplitError> {
    let wanted = [
        (ClassLabel::Control, test_control),
        (ClassLabel::Pd, test_pd),
    ];
    for (label, test) in wanted {
        let total = manifest.class_count(label);
        if test == 0 || test >= total {
            return Err(SplitError::DegenerateClass { label, test, total });
        }
    }

    let mut test = Vec::new();
    for (label, take) in wanted {
        test.extend(
            shuffled_class(manifest, label, seed, STREAM_HOLDOUT)
                .into_iter()
                .take(take),
        );
    }
    let test = in_manifest_order(manifest, test);
    let held: std::collections::HashSet<&str> = test.iter().map(String::as_str).collect();
    let train = manifest
        .entries()
        .iter()
        .map(|e| e.subject_id.as_str())
        .filter(|id| !held.contains(*id))
        .map(str::to_string)
        .collect();
    Ok(HoldoutSplit { train, test })
}

//! The classifier stack: tensor layers, pluggable backbones, the
//! binary head, Adam, the step-decay schedule, checkpoints, image
//! datasets, and the training loop that ties them together.
//!
//! Everything here is deterministic given a seed. The loop derives one
//! stream per concern (epoch shuffling, per-step dropout, per-subject
//! augmentation), so two runs with the same seed produce bit-identical
//! histories and weights regardless of how batches are scheduled.

pub mod adam;
pub mod backbone;
pub mod checkpoint;
pub mod classifier;
pub mod dataset;
pub mod layers;
pub mod loss;
pub mod schedule;

pub use adam::{Adam, AdamParams};
pub use backbone::{build_backbone, FeatureExtractor, SmallCnn, SMALL_CNN_INPUT, SMALL_CNN_NAME};
pub use checkpoint::{load_backbone_weights, load_checkpoint, save_checkpoint, CheckpointError};
pub use classifier::{gradient_check, Classifier, GradientCheck, HeadConfig};
pub use dataset::{resize_bilinear, BatchAugment, DatasetError, LabeledImageSet};
pub use loss::{bce_loss, sigmoid, threshold_accuracy, BCE_EPSILON};
pub use schedule::StepDecay;

use crate::augment::{AugmentError, AugmentationConfig};
use crate::label::ClassLabel;
use crate::metrics::PredictionRecord;
use crate::rng::{rng_from_seed, seed_for};
use loss::bce_logit_grad;
use ndarray::Array1;
use rand::seq::SliceRandom;

/// Stream tag for the per-epoch shuffle of training indices.
pub const STREAM_SHUFFLE: u64 = 0x5348_5546;
/// Stream tag for per-step dropout masks.
pub const STREAM_DROPOUT: u64 = 0x4452_4f50;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training set needs both classes; got {control} control and {pd} pd subjects")]
    SingleClass { control: usize, pd: usize },
    #[error(transparent)]
    Augment(#[from] AugmentError),
}

/// Everything the training loop needs besides the data and the model.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Freeze the backbone and train only the head.
    pub freeze_backbone: bool,
    pub schedule: StepDecay,
    pub adam: AdamParams,
    /// `None` feeds raw images; `Some` perturbs every training batch.
    pub augmentation: Option<AugmentationConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 16,
            seed: 17,
            freeze_backbone: false,
            schedule: StepDecay::default(),
            adam: AdamParams::default(),
            augmentation: Some(AugmentationConfig::default()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 {
            return Err(ModelError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch_size must be at least 1".into()));
        }
        self.schedule.validate().map_err(ModelError::InvalidConfig)?;
        self.adam.validate().map_err(ModelError::InvalidConfig)?;
        if let Some(aug) = &self.augmentation {
            aug.validate()?;
        }
        Ok(())
    }
}

/// Train-mode metrics for one completed epoch. Loss and accuracy are
/// sample-weighted means over the epoch's batches, measured on the
/// augmented, dropout-active forward passes that drove the updates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
}

/// Loss and 0.5-threshold accuracy of a full evaluation pass.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// What [`train`] returns: one entry per epoch, the total optimizer
/// step count, and a final validation pass when a set was supplied.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
    pub validation: Option<EvalStats>,
}

/// Fit `model` on `train_set`, optionally scoring `val_set` at the end.
pub fn train(
    model: &mut Classifier,
    train_set: &LabeledImageSet,
    val_set: Option<&LabeledImageSet>,
    cfg: &TrainConfig,
) -> Result<TrainHistory, ModelError> {
    train_with_progress(model, train_set, val_set, cfg, |_| {})
}

/// [`train`] with a per-epoch callback for progress reporting.
pub fn train_with_progress<F>(
    model: &mut Classifier,
    train_set: &LabeledImageSet,
    val_set: Option<&LabeledImageSet>,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainHistory, ModelError>
where
    F: FnMut(&EpochStats),
{
    cfg.validate()?;
    let control = train_set.class_count(ClassLabel::Control);
    let pd = train_set.class_count(ClassLabel::Pd);
    if control == 0 || pd == 0 {
        return Err(ModelError::SingleClass { control, pd });
    }

    // The optimizer's moment slots are positional, so the trainable set
    // must not change once training starts: freeze before the loop.
    model.set_backbone_trainable(!cfg.freeze_backbone);
    let mut optimizer = Adam::new(cfg.adam);

    let input_shape = model.input_shape();
    let n = train_set.len();
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(cfg.epochs),
        steps: 0,
        validation: None,
    };

    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.lr_at(epoch);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_from_seed(seed_for(
            cfg.seed,
            &[STREAM_SHUFFLE, epoch as u64],
        )));

        let mut loss_sum = 0.0;
        let mut acc_sum = 0.0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let aug = cfg.augmentation.as_ref().map(|config| BatchAugment {
                config,
                seed: cfg.seed,
                epoch,
            });
            let (x, y) = train_set.batch(chunk, input_shape, aug.as_ref());

            let mut dropout_rng = rng_from_seed(seed_for(
                cfg.seed,
                &[STREAM_DROPOUT, epoch as u64, step as u64],
            ));
            let logits = model.forward_logits(&x, true, Some(&mut dropout_rng));
            let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
            let weight = chunk.len() as f64;
            loss_sum += bce_loss(&probs, &y) * weight;
            acc_sum += threshold_accuracy(&probs, &y) * weight;

            let dlogits = Array1::from(bce_logit_grad(&probs, &y));
            model.zero_grads();
            model.backward_from_logits(&dlogits);
            optimizer.step(&mut model.trainable_params(), lr);
            history.steps += 1;
        }

        let stats = EpochStats {
            epoch,
            lr,
            train_loss: loss_sum / n as f64,
            train_accuracy: acc_sum / n as f64,
        };
        on_epoch(&stats);
        history.epochs.push(stats);
    }

    history.validation = val_set.map(|vs| evaluate(model, vs, cfg.batch_size));
    Ok(history)
}

/// Mean loss and accuracy over `set` in evaluation mode (no dropout,
/// no augmentation).
pub fn evaluate(model: &mut Classifier, set: &LabeledImageSet, batch_size: usize) -> EvalStats {
    assert!(batch_size > 0, "batch_size must be at least 1");
    assert!(!set.is_empty(), "evaluation set is empty");
    let input_shape = model.input_shape();
    let indices: Vec<usize> = (0..set.len()).collect();
    let mut loss_sum = 0.0;
    let mut acc_sum = 0.0;
    for chunk in indices.chunks(batch_size) {
        let (x, y) = set.batch(chunk, input_shape, None);
        let probs = model.predict_proba(&x);
        let weight = chunk.len() as f64;
        loss_sum += bce_loss(&probs, &y) * weight;
        acc_sum += threshold_accuracy(&probs, &y) * weight;
    }
    EvalStats {
        loss: loss_sum / set.len() as f64,
        accuracy: acc_sum / set.len() as f64,
    }
}

/// Score every image in `set`, in set order, in evaluation mode.
pub fn predict(
    model: &mut Classifier,
    set: &LabeledImageSet,
    batch_size: usize,
) -> Vec<PredictionRecord> {
    assert!(batch_size > 0, "batch_size must be at least 1");
    let input_shape = model.input_shape();
    let indices: Vec<usize> = (0..set.len()).collect();
    let mut records = Vec::with_capacity(set.len());
    for chunk in indices.chunks(batch_size) {
        let (x, _) = set.batch(chunk, input_shape, None);
        let probs = model.predict_proba(&x);
        for (&index, score) in chunk.iter().zip(probs) {
            records.push(PredictionRecord {
                subject_id: set.subject_id(index).to_string(),
                score,
                truth: set.label(index),
            });
        }
    }
    records
}

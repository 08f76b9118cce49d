//! Layered pipeline configuration: built-in defaults, then the TOML
//! file, then the environment, then command-line flags. The fully
//! resolved result is echoed into every output directory so a run can
//! be reproduced from its artifacts alone.

use crate::errors::{Classify, CliResult};
use anyhow::{anyhow, Context};
use datscan_core::augment::AugmentationConfig;
use datscan_core::model::{AdamParams, HeadConfig, StepDecay, TrainConfig, SMALL_CNN_NAME};
use datscan_core::phantom::PhantomParams;
use datscan_core::triplet::{SliceAxis, DEFAULT_SLICE_START};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment override for `paths.data_root`.
pub const DATA_ROOT_ENV: &str = "DATSCAN_DATA_ROOT";

/// File name under which the resolved configuration is echoed.
pub const CONFIG_ECHO_NAME: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsSection,
    pub preprocess: PreprocessSection,
    pub augment: AugmentSection,
    pub train: TrainSection,
    pub schedule: ScheduleSection,
    pub adam: AdamSection,
    pub split: SplitSection,
    pub phantom: PhantomSection,
    pub report: ReportSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Base directory for datasets; `<data_root>/volumes` and
    /// `<data_root>/images` are the conventional layout.
    pub data_root: PathBuf,
    /// Base directory for run outputs.
    pub output_root: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            data_root: PathBuf::from("data"),
            output_root: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    /// First plane of the three-slice extraction window.
    pub slice_start: usize,
    /// Slice orientation: `axial`, `coronal` or `sagittal`.
    pub axis: String,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            slice_start: DEFAULT_SLICE_START,
            axis: "axial".to_string(),
        }
    }
}

impl PreprocessSection {
    pub fn parse_axis(&self) -> anyhow::Result<SliceAxis> {
        match self.axis.as_str() {
            "axial" => Ok(SliceAxis::Axial),
            "coronal" => Ok(SliceAxis::Coronal),
            "sagittal" => Ok(SliceAxis::Sagittal),
            other => Err(anyhow!(
                "unknown slice axis {other:?} (expected axial, coronal or sagittal)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    /// Master switch; when false, training batches are fed unmodified.
    pub enabled: bool,
    pub hflip_prob: f64,
    pub width_shift: f64,
    pub height_shift: f64,
    /// Multiplicative brightness range `[low, high]`.
    pub brightness: [f64; 2],
}

impl Default for AugmentSection {
    fn default() -> Self {
        let core = AugmentationConfig::default();
        AugmentSection {
            enabled: true,
            hflip_prob: core.hflip_prob,
            width_shift: core.width_shift,
            height_shift: core.height_shift,
            brightness: core.brightness,
        }
    }
}

impl AugmentSection {
    pub fn to_core(&self) -> Option<AugmentationConfig> {
        self.enabled.then(|| AugmentationConfig {
            hflip_prob: self.hflip_prob,
            width_shift: self.width_shift,
            height_shift: self.height_shift,
            brightness: self.brightness,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    /// Base seed for weight init and the training-time random streams.
    pub seed: u64,
    pub backbone: String,
    pub hidden_units: usize,
    pub dropout: f64,
    pub freeze_backbone: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let core = TrainConfig::default();
        let head = HeadConfig::default();
        TrainSection {
            epochs: core.epochs,
            batch_size: core.batch_size,
            seed: core.seed,
            backbone: SMALL_CNN_NAME.to_string(),
            hidden_units: head.hidden_units,
            dropout: head.dropout,
            freeze_backbone: core.freeze_backbone,
        }
    }
}

impl TrainSection {
    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            hidden_units: self.hidden_units,
            dropout: self.dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub period: usize,
    pub min_lr: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let core = StepDecay::default();
        ScheduleSection {
            initial_lr: core.initial_lr,
            decay_factor: core.decay_factor,
            period: core.period,
            min_lr: core.min_lr,
        }
    }
}

impl ScheduleSection {
    pub fn to_core(&self) -> StepDecay {
        StepDecay {
            initial_lr: self.initial_lr,
            decay_factor: self.decay_factor,
            period: self.period,
            min_lr: self.min_lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamSection {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamSection {
    fn default() -> Self {
        let core = AdamParams::default();
        AdamSection {
            beta1: core.beta1,
            beta2: core.beta2,
            epsilon: core.epsilon,
        }
    }
}

impl AdamSection {
    pub fn to_core(&self) -> AdamParams {
        AdamParams {
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Fold count for cross-validation.
    pub folds: usize,
    /// Test fraction for the holdout split.
    pub test_fraction: f64,
    /// Seed of the split assignments (independent of the training seed).
    pub seed: u64,
    /// Explicit per-class holdout test sizes; when both are set they
    /// take precedence over `test_fraction`.
    pub test_control: Option<usize>,
    pub test_pd: Option<usize>,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            folds: 10,
            test_fraction: 0.2,
            seed: 17,
            test_control: None,
            test_pd: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSection {
    pub n_control: usize,
    pub n_pd: usize,
    pub control_uptake: f32,
    pub pd_uptake_factor: f32,
    pub asymmetry_factor: f32,
    pub noise_sigma: f32,
    pub seed: u64,
}

impl Default for PhantomSection {
    fn default() -> Self {
        let core = PhantomParams::default();
        PhantomSection {
            n_control: 210,
            n_pd: 449,
            control_uptake: core.control_uptake,
            pd_uptake_factor: core.pd_uptake_factor,
            asymmetry_factor: core.asymmetry_factor,
            noise_sigma: core.noise_sigma,
            seed: core.seed,
        }
    }
}

impl PhantomSection {
    pub fn params(&self) -> PhantomParams {
        PhantomParams {
            control_uptake: self.control_uptake,
            pd_uptake_factor: self.pd_uptake_factor,
            asymmetry_factor: self.asymmetry_factor,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            ..PhantomParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Render PNG curve plots next to the CSV exports (best effort).
    pub plots: bool,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection { plots: true }
    }
}

/// Sources that override the file: the environment and global flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub data_root: Option<PathBuf>,
    pub output_root: Option<PathBuf>,
}

impl PipelineConfig {
    /// Resolve the effective configuration from all layers.
    pub fn resolve(overrides: &Overrides) -> CliResult<PipelineConfig> {
        let mut cfg = match &overrides.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))
                    .or_usage()?;
                toml::from_str::<PipelineConfig>(&text)
                    .with_context(|| format!("invalid config file {}", path.display()))
                    .or_usage()?
            }
            None => PipelineConfig::default(),
        };
        if let Some(root) = std::env::var_os(DATA_ROOT_ENV) {
            cfg.paths.data_root = PathBuf::from(root);
        }
        if let Some(root) = &overrides.data_root {
            cfg.paths.data_root = root.clone();
        }
        if let Some(root) = &overrides.output_root {
            cfg.paths.output_root = root.clone();
        }
        Ok(cfg)
    }

    /// Check every section against its module's invariants.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.preprocess.parse_axis()?;
        if let Some(aug) = self.augment.to_core() {
            aug.validate()?;
        }
        if self.train.epochs == 0 {
            return Err(anyhow!("train.epochs must be at least 1"));
        }
        if self.train.batch_size == 0 {
            return Err(anyhow!("train.batch_size must be at least 1"));
        }
        if !(self.train.dropout >= 0.0 && self.train.dropout < 1.0) {
            return Err(anyhow!(
                "train.dropout must be in [0, 1), got {}",
                self.train.dropout
            ));
        }
        if self.train.hidden_units == 0 {
            return Err(anyhow!("train.hidden_units must be at least 1"));
        }
        self.schedule.to_core().validate().map_err(|e| anyhow!(e))?;
        self.adam.to_core().validate().map_err(|e| anyhow!(e))?;
        if self.split.folds < 2 {
            return Err(anyhow!("split.folds must be at least 2"));
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(anyhow!(
                "split.test_fraction must lie strictly between 0 and 1, got {}",
                self.split.test_fraction
            ));
        }
        if self.split.test_control.is_some() != self.split.test_pd.is_some() {
            return Err(anyhow!(
                "split.test_control and split.test_pd must be set together"
            ));
        }
        self.phantom.params().validate()?;
        Ok(())
    }

    /// Core training configuration assembled from the relevant sections.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed: self.train.seed,
            freeze_backbone: self.train.freeze_backbone,
            schedule: self.schedule.to_core(),
            adam: self.adam.to_core(),
            augmentation: self.augment.to_core(),
        }
    }

    /// Conventional location of the volume dataset.
    pub fn volumes_dir(&self) -> PathBuf {
        self.paths.data_root.join("volumes")
    }

    /// Conventional location of the preprocessed image dataset.
    pub fn images_dir(&self) -> PathBuf {
        self.paths.data_root.join("images")
    }

    /// Conventional output directory for one subcommand.
    pub fn run_dir(&self, sub: &str) -> PathBuf {
        self.paths.output_root.join(sub)
    }

    /// Echo the resolved configuration into `dir` so the run can be
    /// reproduced from its outputs.
    pub fn echo_into(&self, dir: &Path) -> CliResult<()> {
        let text = toml::to_string_pretty(self)
            .context("cannot serialize resolved config")
            .or_usage()?;
        let path = dir.join(CONFIG_ECHO_NAME);
        std::fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))
            .or_data()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = PipelineConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let cfg: PipelineConfig =
            toml::from_str("[train]\nepochs = 30\n\n[split]\nfolds = 3\n").unwrap();
        assert_eq!(cfg.train.epochs, 30);
        assert_eq!(cfg.split.folds, 3);
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(cfg.schedule.initial_lr, 1e-3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("[train]\nepoch = 30\n").is_err());
    }

    #[test]
    fn bad_axis_fails_validation() {
        let mut cfg = PipelineConfig::default();
        cfg.preprocess.axis = "oblique".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mismatched_holdout_counts_fail() {
        let mut cfg = PipelineConfig::default();
        cfg.split.test_control = Some(43);
        assert!(cfg.validate().is_err());
        cfg.split.test_pd = Some(89);
        cfg.validate().unwrap();
    }

    #[test]
    fn disabled_augmentation_maps_to_none() {
        let mut cfg = PipelineConfig::default();
        cfg.augment.enabled = false;
        assert!(cfg.train_config().augmentation.is_none());
    }
}

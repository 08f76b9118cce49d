//! datscan-core: DaTscan SPECT classification pipeline building blocks.
//!
//! Converts 3D SPECT volumes into 2D three-channel slice-triplet images,
//! generates labeled synthetic striatal phantoms for offline testing,
//! produces deterministic stratified splits (k-fold and holdout), trains a
//! small CNN binary classifier (PD vs. control) with on-the-fly
//! augmentation, and evaluates predictions with confusion-matrix metrics
//! and ROC / precision-recall analysis.
//!
//! All randomness flows through the seeded, portable generator described in
//! [`rng`]; every pipeline stage is reproducible from explicit seeds.

pub mod augment;
pub mod label;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod phantom;
pub mod rng;
pub mod splits;
pub mod triplet;
pub mod volume;

pub use label::ClassLabel;
pub use manifest::{DatasetManifest, ManifestEntry};
pub use triplet::TripletImage;
pub use volume::{Volume, VolumeDims};

//! In-memory labeled image sets and batch assembly.
//!
//! Images stay in their 8-bit form until batch time; a batch converts
//! to `[0, 1]` floats, optionally augments (per-subject, per-epoch
//! streams), resizes to the backbone's input if needed, and widens to
//! `f64`. Keeping the augmentation inside batch assembly means a batch
//! is a pure function of `(dataset, indices, seed, epoch)`.

use crate::augment::{augment, sample_rng, AugmentationConfig};
use crate::label::ClassLabel;
use crate::manifest::{DatasetManifest, ManifestError};
use crate::triplet::{TripletError, TripletImage};
use ndarray::{Array3, Array4, ArrayView3};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Image(#[from] TripletError),
    #[error("image for {subject_id:?} is {found:?} but the set is {expected:?} (height, width)")]
    InconsistentShape {
        subject_id: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("image for {subject_id:?} has no class label")]
    MissingLabel { subject_id: String },
    #[error("dataset is empty")]
    Empty,
    #[error("subject {subject_id:?} is not in the dataset")]
    UnknownSubject { subject_id: String },
}

struct LoadedImage {
    subject_id: String,
    label: ClassLabel,
    pixels: Array3<u8>,
}

/// A uniformly sized, fully labeled image collection.
pub struct LabeledImageSet {
    images: Vec<LoadedImage>,
    height: usize,
    width: usize,
}

impl std::fmt::Debug for LabeledImageSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LabeledImageSet")
            .field("len", &self.images.len())
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

/// Augmentation request for one batch.
pub struct BatchAugment<'a> {
    pub config: &'a AugmentationConfig,
    pub seed: u64,
    pub epoch: usize,
}

impl LabeledImageSet {
    /// Wrap decoded images; all must carry labels and share dimensions.
    pub fn from_images(images: Vec<TripletImage>) -> Result<Self, DatasetError> {
        let first = images.first().ok_or(DatasetError::Empty)?;
        let (height, width) = (first.height(), first.width());

        let mut loaded = Vec::with_capacity(images.len());
        for img in &images {
            let label = img.label().ok_or_else(|| DatasetError::MissingLabel {
                subject_id: img.subject_id().to_string(),
            })?;
            if (img.height(), img.width()) != (height, width) {
                return Err(DatasetError::InconsistentShape {
                    subject_id: img.subject_id().to_string(),
                    expected: (height, width),
                    found: (img.height(), img.width()),
                });
            }
            loaded.push(LoadedImage {
                subject_id: img.subject_id().to_string(),
                label,
                pixels: img.pixels().to_owned(),
            });
        }
        Ok(LabeledImageSet {
            images: loaded,
            height,
            width,
        })
    }

    /// Decode every manifest entry under `root`.
    pub fn load(root: &Path, manifest: &DatasetManifest) -> Result<Self, DatasetError> {
        let mut images = Vec::with_capacity(manifest.len());
        for entry in manifest.entries() {
            images.push(TripletImage::load_png(
                &root.join(&entry.relative_path),
                entry.subject_id.clone(),
                Some(entry.label),
            )?);
        }
        Self::from_images(images)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(height, width)` shared by every image.
    pub fn image_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn subject_id(&self, index: usize) -> &str {
        &self.images[index].subject_id
    }

    pub fn label(&self, index: usize) -> ClassLabel {
        self.images[index].label
    }

    pub fn class_count(&self, label: ClassLabel) -> usize {
        self.images.iter().filter(|i| i.label == label).count()
    }

    /// Indices of `ids` within this set, erroring on unknown subjects.
    pub fn indices_of<'a, I>(&self, ids: I) -> Result<Vec<usize>, DatasetError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let position: std::collections::HashMap<&str, usize> = self
            .images
            .iter()
            .enumerate()
            .map(|(i, img)| (img.subject_id.as_str(), i))
            .collect();
        ids.into_iter()
            .map(|id| {
                position
                    .get(id)
                    .copied()
                    .ok_or_else(|| DatasetError::UnknownSubject {
                        subject_id: id.to_string(),
                    })
            })
            .collect()
    }

    /// Assemble `[n, th, tw, 3]` inputs and 0/1 targets for `indices`.
    /// Augmentation (if any) happens at native size, then the image is
    /// resized to `target` when the backbone wants something else.
    pub fn batch(
        &self,
        indices: &[usize],
        target: (usize, usize),
        aug: Option<&BatchAugment<'_>>,
    ) -> (Array4<f64>, Vec<f64>) {
        let (th, tw) = target;
        let mut x = Array4::zeros((indices.len(), th, tw, 3));
        let mut y = Vec::with_capacity(indices.len());

        for (slot, &index) in indices.iter().enumerate() {
            let img = &self.images[index];
            let mut float: Array3<f32> = img.pixels.mapv(|p| p as f32 / 255.0);
            if let Some(a) = aug {
                let mut rng = sample_rng(a.seed, &img.subject_id, a.epoch);
                float = augment(float.view(), a.config, &mut rng);
            }
            if (self.height, self.width) != (th, tw) {
                float = resize_bilinear(float.view(), th, tw);
            }
            for yy in 0..th {
                for xx in 0..tw {
                    for c in 0..3 {
                        x[[slot, yy, xx, c]] = float[[yy, xx, c]] as f64;
                    }
                }
            }
            y.push(if img.label.is_positive() { 1.0 } else { 0.0 });
        }
        (x, y)
    }
}

/// Bilinear resampling with half-pixel centers and edge clamping.
pub fn resize_bilinear(img: ArrayView3<'_, f32>, th: usize, tw: usize) -> Array3<f32> {
    let (h, w, c) = img.dim();
    assert!(th > 0 && tw > 0, "target dimensions must be positive");
    let sy = h as f32 / th as f32;
    let sx = w as f32 / tw as f32;

    let mut out = Array3::zeros([th, tw, c]);
    for oy in 0..th {
        let fy = ((oy as f32 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f32);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f32;
        for ox in 0..tw {
            let fx = ((ox as f32 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f32);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f32;
            for ch in 0..c {
                let top = img[[y0, x0, ch]] * (1.0 - wx) + img[[y0, x1, ch]] * wx;
                let bottom = img[[y1, x0, ch]] * (1.0 - wx) + img[[y1, x1, ch]] * wx;
                out[[oy, ox, ch]] = top * (1.0 - wy) + bottom * wy;
            }
        }
    }
    out
}

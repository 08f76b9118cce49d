//! Three consecutive planes of a volume packed into one RGB image.
//!
//! The classifier consumes 2D images, not volumes: channels R, G and B
//! hold planes `start`, `start + 1` and `start + 2` along the chosen
//! axis. Intensities are min-max normalized jointly over the three
//! planes (one window, so relative uptake between neighbouring slices
//! survives) and quantized to `0..=255` with round-half-up. A constant
//! triplet maps to all zeros.

use crate::label::ClassLabel;
use crate::volume::Volume;
use ndarray::{Array3, ArrayView2, ArrayView3, Axis};
use std::path::{Path, PathBuf};

/// Default first slice of the extracted triplet (0-based; covers the
/// striatal planes 40..=42 on the standard 91x109x91 grid).
pub const DEFAULT_SLICE_START: usize = 40;

/// Anatomical slicing direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceAxis {
    /// Fixed Z; planes are (row = Y, col = X).
    #[default]
    Axial,
    /// Fixed Y; planes are (row = Z, col = X).
    Coronal,
    /// Fixed X; planes are (row = Z, col = Y).
    Sagittal,
}

impl SliceAxis {
    fn ndarray_axis(self) -> Axis {
        // Volume arrays are shaped [z, y, x].
        match self {
            SliceAxis::Axial => Axis(0),
            SliceAxis::Coronal => Axis(1),
            SliceAxis::Sagittal => Axis(2),
        }
    }

    fn extent(self, vol: &Volume) -> usize {
        let dims = vol.dims();
        match self {
            SliceAxis::Axial => dims.z,
            SliceAxis::Coronal => dims.y,
            SliceAxis::Sagittal => dims.x,
        }
    }
}

impl std::fmt::Display for SliceAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SliceAxis::Axial => "axial",
            SliceAxis::Coronal => "coronal",
            SliceAxis::Sagittal => "sagittal",
        })
    }
}

/// An 8-bit RGB slice triplet, shaped `[height, width, 3]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletImage {
    subject_id: String,
    label: Option<ClassLabel>,
    pixels: Array3<u8>,
}

#[derive(Debug, thiserror::Error)]
pub enum TripletError {
    #[error(
        "cannot take {axis} slices {start}..={} from volume {subject_id:?}: axis extent is {extent}",
        start + 2
    )]
    SliceOutOfRange {
        subject_id: String,
        axis: SliceAxis,
        start: usize,
        extent: usize,
    },
    #[error("image error on {path:?}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("image {path:?} has zero width or height")]
    EmptyImage { path: PathBuf },
}

impl TripletImage {
    pub fn new(
        subject_id: impl Into<String>,
        label: Option<ClassLabel>,
        pixels: Array3<u8>,
    ) -> Self {
        assert_eq!(pixels.shape()[2], 3, "triplet images have 3 channels");
        TripletImage {
            subject_id: subject_id.into(),
            label,
            pixels,
        }
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn label(&self) -> Option<ClassLabel> {
        self.label
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    /// Pixel grid, shaped `[height, width, 3]`.
    pub fn pixels(&self) -> ArrayView3<'_, u8> {
        self.pixels.view()
    }

    /// One channel as a `(height, width)` view; `c` is 0 (R), 1 (G) or 2 (B).
    pub fn channel(&self, c: usize) -> ArrayView2<'_, u8> {
        self.pixels.index_axis(Axis(2), c)
    }

    /// Encode as PNG.
    pub fn write_png(&self, path: &Path) -> Result<(), TripletError> {
        let (h, w) = (self.height() as u32, self.width() as u32);
        let raw = self
            .pixels
            .as_standard_layout()
            .as_slice()
            .expect("standard layout")
            .to_vec();
        let img = image::RgbImage::from_raw(w, h, raw).expect("raw buffer matches dimensions");
        img.save(path).map_err(|source| TripletError::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Decode a PNG written by [`TripletImage::write_png`]. Identity and
    /// label are not stored in the image, so the caller supplies them
    /// (normally from the dataset manifest).
    pub fn load_png(
        path: &Path,
        subject_id: impl Into<String>,
        label: Option<ClassLabel>,
    ) -> Result<Self, TripletError> {
        let img = image::open(path)
            .map_err(|source| TripletError::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w == 0 || h == 0 {
            return Err(TripletError::EmptyImage {
                path: path.to_path_buf(),
            });
        }
        let pixels = Array3::from_shape_vec([h, w, 3], img.into_raw())
            .expect("decoded buffer matches dimensions");
        Ok(TripletImage::new(subject_id, label, pixels))
    }
}

/// Extract planes `start..start + 3` along `axis` and quantize them into
/// an RGB image. Fails if the volume is too shallow for the window.
pub fn extract_triplet(
    vol: &Volume,
    axis: SliceAxis,
    start: usize,
) -> Result<TripletImage, TripletError> {
    let extent = axis.extent(vol);
    if start + 3 > extent {
        return Err(TripletError::SliceOutOfRange {
            subject_id: vol.subject_id().to_string(),
            axis,
            start,
            extent,
        });
    }

    let planes: Vec<ArrayView2<'_, f32>> = (0..3)
        .map(|c| vol.voxels().index_axis_move(axis.ndarray_axis(), start + c))
        .collect();

    let mut min = f32::INFINITY;
    let mut max = f32::NEG_INFINITY;
    for plane in &planes {
        for &v in plane.iter() {
            min = min.min(v);
            max = max.max(v);
        }
    }
    let range = max - min;

    let (h, w) = planes[0].dim();
    let mut pixels = Array3::zeros([h, w, 3]);
    if range > 0.0 {
        for (c, plane) in planes.iter().enumerate() {
            for ((r, col), &v) in plane.indexed_iter() {
                let norm = (v - min) / range;
                let q = (norm * 255.0 + 0.5).floor().clamp(0.0, 255.0);
                pixels[[r, col, c]] = q as u8;
            }
        }
    }

    Ok(TripletImage::new(vol.subject_id(), vol.label(), pixels))
}

/// [`extract_triplet`] with the standard axial window.
pub fn extract_default_triplet(vol: &Volume) -> Result<TripletImage, TripletError> {
    extract_triplet(vol, SliceAxis::Axial, DEFAULT_SLICE_START)
}

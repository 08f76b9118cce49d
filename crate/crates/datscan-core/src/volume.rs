//! SPECT volume type and its on-disk format.
//!
//! A volume is stored as two files: a small text header (`.vhdr`) and a raw
//! payload (`.vraw`) of exactly `x * y * z` little-endian 32-bit floats,
//! with X the fastest-varying axis and Z the slowest. The header carries
//! the dimensions, scalar type, axis order, subject id and an optional
//! class label:
//!
//! ```text
//! format: datscan-volume/1
//! dims: 91 109 91
//! dtype: f32le
//! order: xyz
//! subject: pd-0001
//! label: pd
//! ```
//!
//! The format is deliberately minimal so that byte-identical round trips
//! are trivial to verify; registered clinical volumes are expected to be
//! converted into it upstream.

use crate::label::ClassLabel;
use ndarray::{Array3, ArrayView2, ArrayView3};
use std::fmt;
use std::path::{Path, PathBuf};

/// Expected grid for registered volumes.
pub const DEFAULT_DIMS: VolumeDims = VolumeDims {
    x: 91,
    y: 109,
    z: 91,
};

const FORMAT_LINE: &str = "datscan-volume/1";
const HEADER_EXT: &str = "vhdr";
const RAW_EXT: &str = "vraw";

/// Grid extents along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct VolumeDims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl VolumeDims {
    pub fn voxel_count(&self) -> usize {
        self.x * self.y * self.z
    }
}

impl fmt::Display for VolumeDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.x, self.y, self.z)
    }
}

/// A labeled (or unlabeled) 3D scalar grid for one subject.
///
/// Voxels are held in an `[z, y, x]`-shaped array so the memory layout
/// matches the file payload (X fastest) and an axial slice is a contiguous
/// `(y, x)` view.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    subject_id: String,
    label: Option<ClassLabel>,
    voxels: Array3<f32>,
}

/// Errors from volume construction and I/O. Each failure mode is a
/// distinct variant so callers can report missing files, malformed
/// headers and payload mismatches separately.
#[derive(Debug, thiserror::Error)]
pub enum VolumeError {
    #[error("volume file {path:?} not found")]
    MissingFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error on {path:?}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed volume header {path:?}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error(
        "payload size mismatch for {path:?}: header declares {expected} voxels \
         ({expected_bytes} bytes) but payload holds {actual_bytes} bytes"
    )]
    PayloadSizeMismatch {
        path: PathBuf,
        expected: usize,
        expected_bytes: usize,
        actual_bytes: usize,
    },
    #[error("volume {subject_id:?} contains a non-finite voxel at index {index}")]
    NonFiniteVoxel { subject_id: String, index: usize },
    #[error("invalid subject id {0:?}: must be non-empty and use only [A-Za-z0-9._-]")]
    InvalidSubjectId(String),
}

pub(crate) fn validate_subject_id(id: &str) -> Result<(), VolumeError> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(VolumeError::InvalidSubjectId(id.to_string()))
    }
}

impl Volume {
    /// Wrap a voxel grid. The array shape must be `[z, y, x]` of `dims`
    /// and every value must be finite.
    pub fn new(
        subject_id: impl Into<String>,
        label: Option<ClassLabel>,
        voxels: Array3<f32>,
    ) -> Result<Self, VolumeError> {
        let subject_id = subject_id.into();
        validate_subject_id(&subject_id)?;
        if let Some(index) = voxels.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFiniteVoxel { subject_id, index });
        }
        Ok(Volume {
            subject_id,
            label,
            voxels,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn label(&self) -> Option<ClassLabel> {
        self.label
    }

    pub fn dims(&self) -> VolumeDims {
        let s = self.voxels.shape();
        VolumeDims {
            x: s[2],
            y: s[1],
            z: s[0],
        }
    }

    /// Full voxel grid, shaped `[z, y, x]`.
    pub fn voxels(&self) -> ArrayView3<'_, f32> {
        self.voxels.view()
    }

    pub fn voxel(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[[z, y, x]]
    }

    /// Axial (fixed-Z) plane as a `(y, x)` view.
    pub fn axial_slice(&self, z: usize) -> ArrayView2<'_, f32> {
        self.voxels.index_axis(ndarray::Axis(0), z)
    }

    /// Write header + payload next to each other: `stem.vhdr` and
    /// `stem.vraw`. `header_path` may omit the extension.
    pub fn write(&self, header_path: &Path) -> Result<(), VolumeError> {
        let (hdr, raw) = sibling_paths(header_path);
        let dims = self.dims();

        let mut header = String::new();
        header.push_str(&format!("format: {FORMAT_LINE}\n"));
        header.push_str(&format!("dims: {} {} {}\n", dims.x, dims.y, dims.z));
        header.push_str("dtype: f32le\n");
        header.push_str("order: xyz\n");
        header.push_str(&format!("subject: {}\n", self.subject_id));
        if let Some(label) = self.label {
            header.push_str(&format!("label: {label}\n"));
        }
        std::fs::write(&hdr, header).map_err(|source| VolumeError::Io {
            path: hdr.clone(),
            source,
        })?;

        let mut payload = Vec::with_capacity(dims.voxel_count() * 4);
        for v in self
            .voxels
            .as_slice()
            .expect("volume voxels are standard layout")
        {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&raw, payload).map_err(|source| VolumeError::Io { path: raw, source })
    }

    /// Load a volume from its header path (`.vhdr`); the payload is read
    /// from the sibling `.vraw`.
    pub fn load(header_path: &Path) -> Result<Self, VolumeError> {
        let (hdr, raw) = sibling_paths(header_path);
        let header_text = read_file(&hdr)?;
        let parsed = parse_header(&hdr, &header_text)?;

        let payload = read_file_bytes(&raw)?;
        let expected_bytes = parsed.dims.voxel_count() * 4;
        if payload.len() != expected_bytes {
            return Err(VolumeError::PayloadSizeMismatch {
                path: raw,
                expected: parsed.dims.voxel_count(),
                expected_bytes,
                actual_bytes: payload.len(),
            });
        }

        let voxels: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let array = Array3::from_shape_vec([parsed.dims.z, parsed.dims.y, parsed.dims.x], voxels)
            .expect("payload length was checked against dims");
        Volume::new(parsed.subject_id, parsed.label, array)
    }
}

struct ParsedHeader {
    dims: VolumeDims,
    subject_id: String,
    label: Option<ClassLabel>,
}

fn parse_header(path: &Path, text: &str) -> Result<ParsedHeader, VolumeError> {
    let malformed = |reason: String| VolumeError::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };

    let mut format = None;
    let mut dims = None;
    let mut dtype = None;
    let mut order = None;
    let mut subject = None;
    let mut label = None;

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| malformed(format!("line {}: expected `key: value`", lineno + 1)))?;
        let value = value.trim();
        let slot = match key.trim() {
            "format" => &mut format,
            "dims" => &mut dims,
            "dtype" => &mut dtype,
            "order" => &mut order,
            "subject" => &mut subject,
            "label" => &mut label,
            other => return Err(malformed(format!("unknown key {other:?}"))),
        };
        if slot.replace(value.to_string()).is_some() {
            return Err(malformed(format!("duplicate key {:?}", key.trim())));
        }
    }

    match format.as_deref() {
        Some(FORMAT_LINE) => {}
        Some(other) => return Err(malformed(format!("unsupported format {other:?}"))),
        None => return Err(malformed("missing `format` line".into())),
    }
    match dtype.as_deref() {
        Some("f32le") => {}
        Some(other) => return Err(malformed(format!("unsupported dtype {other:?}"))),
        None => return Err(malformed("missing `dtype`".into())),
    }
    match order.as_deref() {
        Some("xyz") => {}
        Some(other) => return Err(malformed(format!("unsupported axis order {other:?}"))),
        None => return Err(malformed("missing `order`".into())),
    }

    let dims_str = dims.ok_or_else(|| malformed("missing `dims`".into()))?;
    let parts: Vec<usize> = dims_str
        .split_whitespace()
        .map(|p| p.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| malformed(format!("bad dims {dims_str:?}: {e}")))?;
    let [x, y, z] = parts[..] else {
        return Err(malformed(format!(
            "dims must have exactly 3 entries, got {}",
            parts.len()
        )));
    };
    if x == 0 || y == 0 || z == 0 {
        return Err(malformed(format!("dims must be positive, got {dims_str:?}")));
    }

    let subject_id = subject.ok_or_else(|| malformed("missing `subject`".into()))?;
    let label = label
        .map(|s| {
            s.parse::<ClassLabel>()
                .map_err(|e| malformed(e.to_string()))
        })
        .transpose()?;

    Ok(ParsedHeader {
        dims: VolumeDims { x, y, z },
        subject_id,
        label,
    })
}

/// Resolve the `.vhdr` / `.vraw` pair from either path.
fn sibling_paths(path: &Path) -> (PathBuf, PathBuf) {
    let mut hdr = path.to_path_buf();
    if hdr.extension().and_then(|e| e.to_str()) != Some(HEADER_EXT) {
        hdr.set_extension(HEADER_EXT);
    }
    let mut raw = hdr.clone();
    raw.set_extension(RAW_EXT);
    (hdr, raw)
}

fn read_file(path: &Path) -> Result<String, VolumeError> {
    std::fs::read_to_string(path).map_err(|source| classify_io(path, source))
}

fn read_file_bytes(path: &Path) -> Result<Vec<u8>, VolumeError> {
    std::fs::read(path).map_err(|source| classify_io(path, source))
}

fn classify_io(path: &Path, source: std::io::Error) -> VolumeError {
    if source.kind() == std::io::ErrorKind::NotFound {
        VolumeError::MissingFile {
            path: path.to_path_buf(),
            source,
        }
    } else {
        VolumeError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

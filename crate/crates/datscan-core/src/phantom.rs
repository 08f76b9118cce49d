//! Synthetic striatal phantoms.
//!
//! Each phantom is a pair of striata built from truncated-Gaussian
//! blobs on the standard 91x109x91 grid: one caudate blob plus a chain
//! of five blobs tracing the putamen posteriorly and laterally, combined
//! voxel-wise by maximum. Parkinsonian volumes attenuate the putamen
//! chain by `pd_uptake_factor` bilaterally and by `asymmetry_factor` on
//! top of that in one hemisphere, while the caudate is left intact —
//! the classic "dot vs. comma" appearance.
//!
//! Per-subject variation is derived from the subject id: a rigid
//! integer shift of up to two voxels per axis, a global intensity scale
//! in `[0.95, 1.05]`, and the choice of the more affected hemisphere.
//! Additive Gaussian noise (clamped at zero) is seeded separately. All
//! randomness descends from [`PhantomParams::seed`], so a given
//! `(params, subject_id, label)` triple always renders the identical
//! volume regardless of generation order or thread count.
//!
//! Blobs are truncated at three (normalized) standard deviations, so
//! with `noise_sigma` zero the background is exactly zero; that makes
//! uptake ratios between renders measurable without an ROI toolkit.

use crate::label::ClassLabel;
use crate::manifest::{DatasetManifest, ManifestEntry, ManifestError};
use crate::rng::{hash_str, rng_from_seed, seed_for};
use crate::volume::{Volume, VolumeDims, VolumeError, DEFAULT_DIMS};
use ndarray::Array3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

const STREAM_JITTER: u64 = 0x4a49_5454;
const STREAM_SIDE: u64 = 0x5349_4445;
const STREAM_NOISE: u64 = 0x4e4f_4953;

/// Maximum rigid shift, in voxels, applied per axis from the subject id.
const JITTER_RANGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PhantomParams {
    pub dims: VolumeDims,
    /// Peak striatal intensity of a healthy render.
    pub control_uptake: f32,
    /// Bilateral putamen attenuation in parkinsonian renders.
    pub pd_uptake_factor: f32,
    /// Extra attenuation of the affected hemisphere's putamen.
    pub asymmetry_factor: f32,
    /// Standard deviation of additive Gaussian noise (clamped at zero).
    pub noise_sigma: f32,
    pub seed: u64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams {
            dims: DEFAULT_DIMS,
            control_uptake: 100.0,
            pd_uptake_factor: 0.4,
            asymmetry_factor: 0.8,
            noise_sigma: 5.0,
            seed: 17,
        }
    }
}

impl PhantomParams {
    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |reason: String| Err(PhantomError::InvalidParams(reason));
        if self.dims.voxel_count() == 0 {
            return bad(format!("dims {} contain a zero extent", self.dims));
        }
        if !(self.control_uptake.is_finite() && self.control_uptake > 0.0) {
            return bad(format!("control_uptake must be positive, got {}", self.control_uptake));
        }
        for (name, v) in [
            ("pd_uptake_factor", self.pd_uptake_factor),
            ("asymmetry_factor", self.asymmetry_factor),
        ] {
            if !(v.is_finite() && v > 0.0 && v <= 1.0) {
                return bad(format!("{name} must be in (0, 1], got {v}"));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PhantomError {
    #[error("invalid phantom parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("i/o error on {path:?}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Side of the midline. `Left` is the lower-X half of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hemisphere {
    Left,
    Right,
}

impl Hemisphere {
    pub const BOTH: [Hemisphere; 2] = [Hemisphere::Left, Hemisphere::Right];

    fn sign(self) -> f32 {
        match self {
            Hemisphere::Left => -1.0,
            Hemisphere::Right => 1.0,
        }
    }
}

// Nominal geometry, in voxel coordinates of the standard grid.
const MIDLINE_X: f32 = 45.0;
const CAUDATE_DX: f32 = 13.0;
const CAUDATE_Y: f32 = 66.0;
const CAUDATE_Z: f32 = 41.0;
const CAUDATE_SIGMA: [f32; 3] = [4.0, 5.5, 4.5];
const PUTAMEN_STEPS: [f32; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// One truncated anisotropic Gaussian. `eval` is 1 at the center and
/// exactly 0 beyond three normalized standard deviations.
#[derive(Debug, Clone, Copy)]
struct Blob {
    center: [f32; 3], // x, y, z
    sigma: [f32; 3],
}

impl Blob {
    fn eval(&self, p: [f32; 3]) -> f32 {
        let mut r2 = 0.0;
        for i in 0..3 {
            let d = (p[i] - self.center[i]) / self.sigma[i];
            r2 += d * d;
        }
        if r2 > 9.0 {
            0.0
        } else {
            (-0.5 * r2).exp()
        }
    }
}

fn caudate_blob(hemi: Hemisphere) -> Blob {
    Blob {
        center: [MIDLINE_X + hemi.sign() * CAUDATE_DX, CAUDATE_Y, CAUDATE_Z],
        sigma: CAUDATE_SIGMA,
    }
}

/// The putamen tail: centers drift lateral, posterior and slightly
/// inferior with `t`, while the cross-section thins.
fn putamen_blobs(hemi: Hemisphere) -> Vec<Blob> {
    PUTAMEN_STEPS
        .iter()
        .map(|&t| {
            let dx = 17.0 + 5.0 * t;
            let s = 1.0 - 0.35 * t;
            Blob {
                center: [
                    MIDLINE_X + hemi.sign() * dx,
                    62.0 - 16.0 * t,
                    41.0 - 3.0 * t,
                ],
                sigma: [4.5 * s, 5.0 * s, 4.5 * s],
            }
        })
        .collect()
}

fn field_at(blobs: &[Blob], p: [f32; 3]) -> f32 {
    blobs.iter().map(|b| b.eval(p)).fold(0.0, f32::max)
}

/// Which hemisphere carries the extra parkinsonian attenuation for this
/// subject. Deterministic in `(params.seed, subject_id)`.
pub fn affected_hemisphere(params: &PhantomParams, subject_id: &str) -> Hemisphere {
    let mut rng = rng_from_seed(seed_for(params.seed, &[STREAM_SIDE, hash_str(subject_id)]));
    if rng.random_bool(0.5) {
        Hemisphere::Left
    } else {
        Hemisphere::Right
    }
}

/// Render one phantom volume.
pub fn synth_volume(
    params: &PhantomParams,
    subject_id: &str,
    label: ClassLabel,
) -> Result<Volume, PhantomError> {
    params.validate()?;
    let hash = hash_str(subject_id);

    let mut jitter_rng = rng_from_seed(seed_for(params.seed, &[STREAM_JITTER, hash]));
    let shift = [
        jitter_rng.random_range(-JITTER_RANGE..=JITTER_RANGE) as f32,
        jitter_rng.random_range(-JITTER_RANGE..=JITTER_RANGE) as f32,
        jitter_rng.random_range(-JITTER_RANGE..=JITTER_RANGE) as f32,
    ];
    let intensity = 0.95 + 0.1 * jitter_rng.random::<f32>();
    let affected = affected_hemisphere(params, subject_id);

    let dims = params.dims;
    let mut field = Array3::<f32>::zeros([dims.z, dims.y, dims.x]);
    for hemi in Hemisphere::BOTH {
        let putamen_amp = match label {
            ClassLabel::Control => 1.0,
            ClassLabel::Pd => {
                let mut a = params.pd_uptake_factor;
                if hemi == affected {
                    a *= params.asymmetry_factor;
                }
                a
            }
        };
        splat_max(&mut field, &caudate_blob(hemi), 1.0, shift, dims);
        for blob in putamen_blobs(hemi) {
            splat_max(&mut field, &blob, putamen_amp, shift, dims);
        }
    }

    let scale = params.control_uptake * intensity;
    if params.noise_sigma > 0.0 {
        let noise = Normal::new(0.0f32, params.noise_sigma)
            .expect("sigma validated as finite and positive");
        let mut noise_rng = rng_from_seed(seed_for(params.seed, &[STREAM_NOISE, hash]));
        field.mapv_inplace(|v| (v * scale + noise.sample(&mut noise_rng)).max(0.0));
    } else {
        field.mapv_inplace(|v| v * scale);
    }

    Ok(Volume::new(subject_id, Some(label), field)?)
}

/// Write `max(0, v)`-combined blob values into `field` over the blob's
/// truncation box, with the rigid per-subject `shift` applied.
fn splat_max(field: &mut Array3<f32>, blob: &Blob, amp: f32, shift: [f32; 3], dims: VolumeDims) {
    let shifted = Blob {
        center: [
            blob.center[0] + shift[0],
            blob.center[1] + shift[1],
            blob.center[2] + shift[2],
        ],
        sigma: blob.sigma,
    };
    let lo = |c: f32, s: f32| ((c - 3.0 * s).floor().max(0.0)) as usize;
    let hi = |c: f32, s: f32, n: usize| (((c + 3.0 * s).ceil() as usize) + 1).min(n);
    let (x0, x1) = (lo(shifted.center[0], shifted.sigma[0]), hi(shifted.center[0], shifted.sigma[0], dims.x));
    let (y0, y1) = (lo(shifted.center[1], shifted.sigma[1]), hi(shifted.center[1], shifted.sigma[1], dims.y));
    let (z0, z1) = (lo(shifted.center[2], shifted.sigma[2]), hi(shifted.center[2], shifted.sigma[2], dims.z));
    for z in z0..z1 {
        for y in y0..y1 {
            for x in x0..x1 {
                let v = amp * shifted.eval([x as f32, y as f32, z as f32]);
                let cell = &mut field[[z, y, x]];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }
}

/// Voxels that are putamen-dominated in `hemisphere` for *any* admissible
/// per-subject shift and attenuation: inside the tail (normalized field
/// at least 0.3) and far enough from the caudate that the attenuated
/// putamen still wins the voxel-wise maximum. Within this mask, a
/// parkinsonian render of a subject is an exact scalar multiple of the
/// control render of the same subject (noise aside), so uptake ratios
/// can be read off directly.
pub fn putamen_mask(params: &PhantomParams, hemisphere: Hemisphere) -> Array3<bool> {
    let dims = params.dims;
    let caudate = [caudate_blob(hemisphere)];
    let putamen = putamen_blobs(hemisphere);
    // Dominance must survive the worst attenuation with ~10% headroom.
    let margin = 0.9 * params.pd_uptake_factor * params.asymmetry_factor;

    let mut mask = Array3::from_elem([dims.z, dims.y, dims.x], false);
    let r = JITTER_RANGE;
    for z in 0..dims.z {
        for y in 0..dims.y {
            for x in 0..dims.x {
                let mut ok = true;
                'offsets: for oz in -r..=r {
                    for oy in -r..=r {
                        for ox in -r..=r {
                            let p = [
                                x as f32 + ox as f32,
                                y as f32 + oy as f32,
                                z as f32 + oz as f32,
                            ];
                            let pf = field_at(&putamen, p);
                            let cf = field_at(&caudate, p);
                            if pf < 0.3 || margin * pf <= cf {
                                ok = false;
                                break 'offsets;
                            }
                        }
                    }
                }
                if ok {
                    mask[[z, y, x]] = true;
                }
            }
        }
    }
    mask
}

/// Subject ids for a dataset of the given class sizes:
/// `control-0001.. control-NNNN, pd-0001.. pd-NNNN`.
pub fn subject_roster(n_control: usize, n_pd: usize) -> Vec<(String, ClassLabel)> {
    let mut ids = Vec::with_capacity(n_control + n_pd);
    for i in 1..=n_control {
        ids.push((format!("control-{i:04}"), ClassLabel::Control));
    }
    for i in 1..=n_pd {
        ids.push((format!("pd-{i:04}"), ClassLabel::Pd));
    }
    ids
}

/// Render a whole dataset under `root` (`<class>/<subject>.vhdr` +
/// `.vraw`), returning the manifest with paths relative to `root`.
/// Volumes are rendered in parallel; seeding is per-subject, so the
/// output is identical whatever the thread count.
pub fn write_synthetic_dataset(
    params: &PhantomParams,
    n_control: usize,
    n_pd: usize,
    root: &Path,
) -> Result<DatasetManifest, PhantomError> {
    params.validate()?;
    for label in ClassLabel::ALL {
        let dir = root.join(label.as_str());
        std::fs::create_dir_all(&dir).map_err(|source| PhantomError::Io { path: dir, source })?;
    }

    let roster = subject_roster(n_control, n_pd);
    let entries: Vec<ManifestEntry> = roster
        .par_iter()
        .map(|(id, label)| -> Result<ManifestEntry, PhantomError> {
            let vol = synth_volume(params, id, *label)?;
            let relative_path = PathBuf::from(label.as_str()).join(format!("{id}.vhdr"));
            vol.write(&root.join(&relative_path))?;
            Ok(ManifestEntry {
                subject_id: id.clone(),
                relative_path,
                label: *label,
            })
        })
        .collect::<Result<_, _>>()?;

    Ok(DatasetManifest::new(entries)?)
}

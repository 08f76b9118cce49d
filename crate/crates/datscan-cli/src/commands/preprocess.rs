//! `datscan preprocess` — convert volumes into RGB slice-triplet PNGs.

use super::{ensure_dir, load_manifest, write_manifest};
use crate::config::PipelineConfig;
use crate::errors::{Classify, CliError, CliResult, Failure};
use anyhow::anyhow;
use datscan_core::manifest::{DatasetManifest, ManifestEntry};
use datscan_core::triplet::extract_triplet;
use datscan_core::volume::Volume;
use datscan_core::ClassLabel;
use rayon::prelude::*;
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct PreprocessArgs {
    /// Volume dataset directory (default: `<data_root>/volumes`).
    #[arg(long, value_name = "DIR")]
    pub volumes: Option<PathBuf>,
    /// Output image directory (default: `<data_root>/images`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// First plane of the three-slice extraction window.
    #[arg(long, value_name = "Z")]
    pub slice_start: Option<usize>,
    /// Slice orientation: axial, coronal or sagittal.
    #[arg(long, value_name = "AXIS")]
    pub axis: Option<String>,
}

impl PreprocessArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(z) = self.slice_start {
            cfg.preprocess.slice_start = z;
        }
        if let Some(axis) = &self.axis {
            cfg.preprocess.axis = axis.clone();
        }
    }
}

pub fn run(config: &PipelineConfig, args: &PreprocessArgs) -> CliResult<()> {
    let mut cfg = config.clone();
    args.apply(&mut cfg);
    cfg.validate().or_usage()?;
    let axis = cfg.preprocess.parse_axis().or_usage()?;
    let slice_start = cfg.preprocess.slice_start;

    let volumes = args.volumes.clone().unwrap_or_else(|| cfg.volumes_dir());
    let out = args.out.clone().unwrap_or_else(|| cfg.images_dir());
    let manifest = load_manifest(&volumes)?;
    for label in ClassLabel::ALL {
        ensure_dir(&out.join(label.as_str()))?;
    }

    // Every volume is independent; failures are collected, not
    // short-circuited, so the error summary names all offenders.
    let results: Vec<Result<ManifestEntry, String>> = manifest
        .entries()
        .par_iter()
        .map(|entry| {
            let convert = || -> anyhow::Result<ManifestEntry> {
                let vol = Volume::load(&volumes.join(&entry.relative_path))?;
                let triplet = extract_triplet(&vol, axis, slice_start)?;
                let relative_path =
                    PathBuf::from(entry.label.as_str()).join(format!("{}.png", entry.subject_id));
                triplet.write_png(&out.join(&relative_path))?;
                Ok(ManifestEntry {
                    subject_id: entry.subject_id.clone(),
                    relative_path,
                    label: entry.label,
                })
            };
            convert().map_err(|e| format!("{}: {e:#}", entry.subject_id))
        })
        .collect();

    let mut converted = Vec::new();
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(entry) => converted.push(entry),
            Err(message) => failures.push(message),
        }
    }
    if !failures.is_empty() {
        for message in &failures {
            eprintln!("error: {message}");
        }
        return Err(CliError::new(
            Failure::Data,
            anyhow!(
                "{} of {} volumes failed to convert",
                failures.len(),
                manifest.len()
            ),
        ));
    }

    let image_manifest = DatasetManifest::new(converted).or_data()?;
    let manifest_path = write_manifest(&out, &image_manifest)?;
    cfg.echo_into(&out)?;

    println!(
        "converted {} volumes into PNG triplets under {}",
        image_manifest.len(),
        out.display()
    );
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

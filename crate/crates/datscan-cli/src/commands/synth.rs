//! `datscan synth` — render a synthetic striatal phantom dataset.

use super::{ensure_dir, write_manifest};
use crate::config::PipelineConfig;
use crate::errors::{Classify, CliResult};
use datscan_core::phantom::write_synthetic_dataset;
use datscan_core::ClassLabel;
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// Output dataset directory (default: `<data_root>/volumes`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Number of healthy phantoms.
    #[arg(long, value_name = "N")]
    pub n_control: Option<usize>,
    /// Number of parkinsonian phantoms.
    #[arg(long, value_name = "N")]
    pub n_pd: Option<usize>,
    /// Render seed; every subject derives its own stream from it.
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Peak striatal intensity of a healthy render.
    #[arg(long, value_name = "F")]
    pub control_uptake: Option<f32>,
    /// Bilateral putamen attenuation factor of the PD class.
    #[arg(long, value_name = "F")]
    pub pd_uptake: Option<f32>,
    /// Extra attenuation of the affected hemisphere's putamen.
    #[arg(long, value_name = "F")]
    pub asymmetry: Option<f32>,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, value_name = "F")]
    pub noise_sigma: Option<f32>,
}

impl SynthArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let p = &mut cfg.phantom;
        if let Some(n) = self.n_control {
            p.n_control = n;
        }
        if let Some(n) = self.n_pd {
            p.n_pd = n;
        }
        if let Some(seed) = self.seed {
            p.seed = seed;
        }
        if let Some(v) = self.control_uptake {
            p.control_uptake = v;
        }
        if let Some(v) = self.pd_uptake {
            p.pd_uptake_factor = v;
        }
        if let Some(v) = self.asymmetry {
            p.asymmetry_factor = v;
        }
        if let Some(v) = self.noise_sigma {
            p.noise_sigma = v;
        }
    }
}

pub fn run(config: &PipelineConfig, args: &SynthArgs) -> CliResult<()> {
    let mut cfg = config.clone();
    args.apply(&mut cfg);
    cfg.validate().or_usage()?;

    let out = args.out.clone().unwrap_or_else(|| cfg.volumes_dir());
    ensure_dir(&out)?;
    let params = cfg.phantom.params();
    let manifest =
        write_synthetic_dataset(&params, cfg.phantom.n_control, cfg.phantom.n_pd, &out).or_data()?;
    let manifest_path = write_manifest(&out, &manifest)?;
    cfg.echo_into(&out)?;

    println!(
        "wrote {} volumes ({} control / {} pd) under {}",
        manifest.len(),
        manifest.class_count(ClassLabel::Control),
        manifest.class_count(ClassLabel::Pd),
        out.display()
    );
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

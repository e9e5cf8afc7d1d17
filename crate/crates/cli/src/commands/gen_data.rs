use std::path::PathBuf;

use anet::data::{assemble_camo_coco, dataset_statistics, synth_generate, AssemblySpec, ShapeFamily};
use anet::manifest::{DatasetManifest, MANIFEST_FILE};
use anyhow::{Context, Result};
use clap::{Args, Subcommand};

use crate::config::{set, set_path, Override, RunConfig};

#[derive(Debug, Subcommand)]
pub enum GenData {
    /// Render a synthetic camouflage dataset.
    Synth(SynthArgs),
    /// Merge a camouflaged manifest with a distractor manifest.
    Assemble(AssembleArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// Camouflage strength: 1 makes the foreground texture match the background.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    shape_family: Option<ShapeFamily>,
    #[arg(long)]
    clutter: Option<f64>,
    #[arg(long)]
    small_object_fraction: Option<f64>,
    #[arg(long)]
    non_camouflaged_fraction: Option<f64>,
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    /// Manifest (or directory holding manifest.txt) of camouflaged images.
    #[arg(long)]
    camo: Option<PathBuf>,
    /// Manifest of non-camouflaged images.
    #[arg(long)]
    distractor: Option<PathBuf>,
    #[arg(long)]
    train_fraction: Option<f64>,
}

impl GenData {
    pub fn overrides(&self) -> Vec<Override> {
        let mut o = Vec::new();
        match self {
            GenData::Synth(a) => {
                let ints = [("count", a.count), ("height", a.height), ("width", a.width)];
                for (k, v) in ints {
                    if let Some(v) = v {
                        o.push(set(&format!("data.{k}"), v as i64));
                    }
                }
                let floats = [
                    ("alpha", a.alpha),
                    ("clutter", a.clutter),
                    ("small_object_fraction", a.small_object_fraction),
                    ("non_camouflaged_fraction", a.non_camouflaged_fraction),
                    ("train_fraction", a.train_fraction),
                ];
                for (k, v) in floats {
                    if let Some(v) = v {
                        o.push(set(&format!("data.{k}"), v));
                    }
                }
                if let Some(f) = a.shape_family {
                    o.push(set("data.shape_family", f.as_str()));
                }
            }
            GenData::Assemble(a) => {
                if let Some(p) = &a.camo {
                    o.push(set_path("data.camo", p));
                }
                if let Some(p) = &a.distractor {
                    o.push(set_path("data.distractor", p));
                }
                if let Some(v) = a.train_fraction {
                    o.push(set("data.train_fraction", v));
                }
            }
        }
        o
    }

    pub fn run(&self, cfg: &RunConfig) -> Result<()> {
        let out = cfg.require_out()?;
        let manifest = match self {
            GenData::Synth(_) => synth_generate(&cfg.data.synth_spec(), &out)?,
            GenData::Assemble(_) => {
                let camo = read_absolute(cfg.data.camo.as_ref(), "--camo")?;
                let distractor = read_absolute(cfg.data.distractor.as_ref(), "--distractor")?;
                let spec = AssemblySpec { train_fraction: cfg.data.train_fraction, ..AssemblySpec::new(camo, distractor, cfg.data.seed) };
                let mut merged = assemble_camo_coco(&spec)?;
                merged.write(&out.join(MANIFEST_FILE))?;
                merged.root = out.clone();
                merged
            }
        };
        outln!("wrote {} records to {}", manifest.len(), out.join(MANIFEST_FILE).display());
        outln!("{}", dataset_statistics(&manifest));
        Ok(())
    }
}

/// Reads a manifest with an absolute root, so merged records keep pointing
/// at the original files wherever the merged manifest is written.
fn read_absolute(path: Option<&PathBuf>, flag: &str) -> Result<DatasetManifest> {
    let path = path.with_context(|| format!("gen-data assemble needs {flag}"))?;
    let mut manifest = DatasetManifest::read(path)?;
    let root = if manifest.root.as_os_str().is_empty() { PathBuf::from(".") } else { manifest.root.clone() };
    manifest.root = std::fs::canonicalize(&root).with_context(|| format!("resolving {}", root.display()))?;
    Ok(manifest)
}

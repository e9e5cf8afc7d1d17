use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anet::manifest::{load_sample, DatasetManifest};
use anet::raster;
use anyhow::{bail, Context, Result};
use clap::Args;

use super::{infer, load_or_build, write_text};
use crate::config::{set, set_path, Override, RunConfig};

pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const PREDICTIONS_HEADER: &str = "image\tprobability\traw\tfused";

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Split to predict; test by default.
    #[arg(long)]
    split: Option<anet::Split>,
}

impl PredictArgs {
    pub fn overrides(&self) -> Vec<Override> {
        let mut o = Vec::new();
        if let Some(p) = &self.checkpoint {
            o.push(set_path("model.checkpoint", p));
        }
        if let Some(p) = &self.manifest {
            o.push(set_path("data.manifest", p));
        }
        if let Some(s) = self.split {
            o.push(set("eval.split", s.as_str()));
        }
        o
    }

    pub fn run(&self, cfg: &RunConfig) -> Result<()> {
        if cfg.model.checkpoint.is_none() {
            bail!("predict needs a trained model: pass --checkpoint or set model.checkpoint");
        }
        let model = load_or_build(cfg)?.model;
        let manifest = DatasetManifest::read(cfg.require_manifest()?)?;
        let out = cfg.require_out()?;
        for dir in ["raw", "fused"] {
            std::fs::create_dir_all(out.join(dir)).with_context(|| format!("creating {}", out.join(dir).display()))?;
        }
        let mut table = format!("{PREDICTIONS_HEADER}\n");
        let mut n = 0;
        for (i, record) in manifest.split(cfg.eval.split).enumerate() {
            let sample = load_sample(record, &manifest.root)?;
            let pred = infer(&model, &sample.image)?;
            let name = format!("{i:04}.png");
            let raw = Path::new("raw").join(&name);
            let fused = Path::new("fused").join(&name);
            raster::write_gray8(&out.join(&raw), &pred.raw.to_gray8())?;
            raster::write_gray8(&out.join(&fused), &pred.fused.to_gray8())?;
            let _ = writeln!(table, "{}\t{}\t{}\t{}", record.image.display(), pred.probability, raw.display(), fused.display());
            n += 1;
        }
        write_text(&out.join(PREDICTIONS_FILE), &table)?;
        outln!("wrote {n} {} predictions to {}", cfg.eval.split, out.display());
        Ok(())
    }
}

use std::path::PathBuf;

use anet::manifest::DatasetManifest;
use anet::model::checkpoint;
use anet::training::StageRegistry;
use anet::Split;
use anyhow::{Context, Result};
use clap::Args;

use super::{load_or_build, write_json};
use crate::config::{set_path, Override, RunConfig};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training stage: seg, cls or joint.
    #[arg(long)]
    stage: String,
    /// Dataset manifest; the training split is used.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Checkpoint to continue from; cls and joint require one.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl TrainArgs {
    pub fn overrides(&self) -> Vec<Override> {
        let mut o = Vec::new();
        if let Some(p) = &self.manifest {
            o.push(set_path("data.manifest", p));
        }
        if let Some(p) = &self.checkpoint {
            o.push(set_path("model.checkpoint", p));
        }
        o
    }

    pub fn run(&self, cfg: &RunConfig) -> Result<()> {
        let registry = StageRegistry::default();
        let stage = registry.get(&self.stage)?;
        let manifest_path = cfg.require_manifest()?;
        let mut loaded = load_or_build(cfg)?;
        registry.check_prerequisites(stage.name(), &loaded.stages)?;

        let manifest = DatasetManifest::read(manifest_path)?;
        let data = manifest.load_split(Split::Train).context("loading the training split")?;
        let out = cfg.require_out_as(&format!("{}-config.toml", stage.name()))?;
        log::info!("{} stage on {} training samples", stage.name(), data.len());
        let report = stage.run(&mut loaded.model, &data, &cfg.train)?;

        if !loaded.stages.iter().any(|s| s == stage.name()) {
            loaded.stages.push(stage.name().to_string());
        }
        let ckpt = out.join(format!("{}.ckpt", stage.name()));
        checkpoint::save(&ckpt, &loaded.model, &loaded.stages)?;
        write_json(&out.join(format!("{}-loss.json", stage.name())), &report)?;

        let first = report.loss_curve.first().copied().unwrap_or(f64::NAN);
        let last = report.loss_curve.last().copied().unwrap_or(f64::NAN);
        outln!("{}: {} epochs on {} samples, loss {first:.4} -> {last:.4}", stage.name(), report.loss_curve.len(), report.samples);
        if let Some(acc) = report.train_accuracy {
            outln!("training accuracy {acc:.3}");
        }
        outln!("checkpoint {}", ckpt.display());
        Ok(())
    }
}

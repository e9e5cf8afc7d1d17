pub mod bench;
pub mod eval;
pub mod gen_data;
pub mod predict;
pub mod report;
pub mod train;

use std::path::Path;

use anet::model::{checkpoint, AnetModel, BackboneConfig, BackboneRegistry, HeadConfig};
use anet::{CamoMap, ImageGrid};
use anyhow::{bail, Context, Result};

use crate::config::RunConfig;

/// A model plus the training stages it has completed.
pub struct LoadedModel {
    pub model: AnetModel,
    pub stages: Vec<String>,
}

/// Loads `model.checkpoint` when set, otherwise builds a fresh model from
/// the registry, seeded with `train.seed`.
pub fn load_or_build(cfg: &RunConfig) -> Result<LoadedModel> {
    let registry = BackboneRegistry::default();
    if let Some(path) = &cfg.model.checkpoint {
        let ckpt = checkpoint::load(path, &registry).with_context(|| format!("loading checkpoint {}", path.display()))?;
        let res = ckpt.model.input_resolution();
        let wanted = (cfg.model.height.unwrap_or(res.0), cfg.model.width.unwrap_or(res.1));
        if wanted != res {
            bail!(
                "checkpoint {} expects {}x{} input but model resolution is set to {}x{}",
                path.display(),
                res.0,
                res.1,
                wanted.0,
                wanted.1
            );
        }
        return Ok(LoadedModel { model: ckpt.model, stages: ckpt.stages });
    }
    let (height, width) = cfg.model.resolution();
    let mut backbone = BackboneConfig::reference(cfg.train.seed, height, width);
    backbone.name = cfg.model.backbone.clone();
    if let Some(channels) = &cfg.model.channels {
        backbone.channels = channels.clone();
    }
    let head = HeadConfig { hidden_width: cfg.model.hidden_width, seed: cfg.train.seed, ..HeadConfig::default() };
    let model = AnetModel::new(registry.build(&backbone)?, head)?;
    Ok(LoadedModel { model, stages: Vec::new() })
}

pub struct Prediction {
    pub raw: CamoMap,
    pub fused: CamoMap,
    pub probability: f64,
}

/// Runs the model on `image`, resampling the input to the model's
/// resolution and both maps back to the image's.
pub fn infer(model: &AnetModel, image: &ImageGrid) -> Result<Prediction> {
    let (h, w) = model.input_resolution();
    let out = if image.dims() == (h, w) { model.forward(image)? } else { model.forward(&image.resize_bilinear(h, w))? };
    let back = |m: CamoMap| if m.dims() == image.dims() { m } else { m.resize_bilinear(image.height(), image.width()) };
    Ok(Prediction { raw: back(out.raw), fused: back(out.fused), probability: out.probability })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

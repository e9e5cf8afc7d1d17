//! Single-file checkpoints.
//!
//! Layout: the 8-byte magic `ANETCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, a JSON header, then the backbone and
//! head parameters as little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnetModel, BackboneConfig, BackboneRegistry, ClassificationHead, HeadConfig, Mode};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ANETCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub backbone: BackboneConfig,
    pub head: HeadConfig,
    pub input_resolution: (usize, usize),
    pub hidden_width: usize,
    pub seed: u64,
    /// Training stages completed, in order.
    pub stages: Vec<String>,
    pub backbone_params: usize,
    pub head_params: usize,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: AnetModel,
    pub stages: Vec<String>,
}

impl Checkpoint {
    pub fn has_stage(&self, stage: &str) -> bool {
        self.stages.iter().any(|s| s == stage)
    }
}

pub fn encode(model: &AnetModel, stages: &[String]) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        format: "anet-checkpoint".into(),
        backbone: model.backbone.config().clone(),
        head: model.head.config().clone(),
        input_resolution: model.input_resolution(),
        hidden_width: model.head.config().hidden_width,
        seed: model.backbone.config().seed,
        stages: stages.to_vec(),
        backbone_params: model.backbone.params().len(),
        head_params: model.head.params().len(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + json.len() + 8 * (header.backbone_params + header.head_params));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.backbone.params().iter().chain(model.head.params()) {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn save(path: &Path, model: &AnetModel, stages: &[String]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, encode(model, stages)?).map_err(|e| Error::io(path, e))
}

pub fn decode(bytes: &[u8], registry: &BackboneRegistry, path: &Path) -> Result<Checkpoint> {
    let bad = |message: String| Error::Checkpoint { path: path.to_path_buf(), message };
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(format!("format version {version}, this build reads {FORMAT_VERSION}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..20 + header_len).ok_or_else(|| bad("truncated header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| bad(format!("header: {e}")))?;

    let backbone = registry.build(&header.backbone)?;
    let mut model = AnetModel { head: ClassificationHead::new(&backbone.spec(), header.head.clone())?, backbone, mode: Mode::Eval };
    if model.backbone.params().len() != header.backbone_params || model.head.params().len() != header.head_params {
        return Err(bad(format!(
            "parameter counts {}/{} do not match the architecture ({}/{})",
            header.backbone_params,
            header.head_params,
            model.backbone.params().len(),
            model.head.params().len()
        )));
    }
    let data = &bytes[20 + header_len..];
    if data.len() != 8 * (header.backbone_params + header.head_params) {
        return Err(bad(format!("expected {} parameter bytes, found {}", 8 * (header.backbone_params + header.head_params), data.len())));
    }
    let mut values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for p in model.backbone.params_mut() {
        *p = values.next().unwrap();
    }
    for p in model.head.params_mut() {
        *p = values.next().unwrap();
    }
    Ok(Checkpoint { model, stages: header.stages })
}

pub fn load(path: &Path, registry: &BackboneRegistry) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, registry, path)
}

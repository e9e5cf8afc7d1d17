//! The two-stream network: a segmentation backbone and a classification head
//! sharing the backbone's trunk, fused by scaling every map pixel with the
//! predicted camouflage probability.

pub mod backbone;
pub mod checkpoint;
pub mod head;
pub mod reference;

use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use backbone::{Backbone, BackboneConfig, BackboneOutput, BackboneRegistry, BackboneSpec, Trace};
pub use head::{camouflage_probability, ClassificationHead, HeadConfig, HeadTrace, DESK_HIDDEN_WIDTH};

use crate::error::{Error, Result};
use crate::types::{CamoMap, ImageGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

/// Scales every pixel of `map` by `p`.
pub fn fuse(map: &CamoMap, p: f64) -> Result<CamoMap> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange { what: "fusion probability", value: p, range: "[0, 1]" });
    }
    let data = map.data().iter().map(|&v| p * v).collect();
    CamoMap::new(map.height(), map.width(), data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnetOutput {
    pub fused: CamoMap,
    pub raw: CamoMap,
    pub probability: f64,
    pub logits: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct AnetModel {
    pub backbone: Box<dyn Backbone>,
    pub head: ClassificationHead,
    pub mode: Mode,
}

impl AnetModel {
    pub fn new(backbone: Box<dyn Backbone>, head: HeadConfig) -> Result<Self> {
        let head = ClassificationHead::new(&backbone.spec(), head)?;
        Ok(Self { backbone, head, mode: Mode::Eval })
    }

    /// Reference backbone plus head, both seeded from `seed`.
    pub fn reference(seed: u64, resolution: (usize, usize), hidden_width: usize) -> Result<Self> {
        let backbone = reference::build(&BackboneConfig::reference(seed, resolution.0, resolution.1))?;
        Self::new(Box::new(backbone), HeadConfig { hidden_width, seed, ..HeadConfig::default() })
    }

    pub fn input_resolution(&self) -> (usize, usize) {
        self.backbone.spec().input_resolution
    }

    pub fn backbone_forward(&self, image: &ImageGrid) -> Result<BackboneOutput> {
        self.backbone.forward(image)
    }

    pub fn head_forward(&self, trunk: &[f64]) -> Result<f64> {
        self.head.forward(trunk)
    }

    /// Inference pass: trunk computed once, dropout off, deterministic.
    pub fn forward(&self, image: &ImageGrid) -> Result<AnetOutput> {
        let out = self.backbone.forward(image)?;
        let trace = self.head.forward_trace(&out.trunk, None)?;
        self.assemble(out.map, &trace)
    }

    /// Forward pass that keeps traces for backprop. Dropout is active when the
    /// model is in [`Mode::Train`].
    pub fn forward_train(&self, image: &ImageGrid, rng: &mut ChaCha8Rng) -> Result<(AnetOutput, BackboneOutput, HeadTrace)> {
        let bb = self.backbone.forward(image)?;
        let dropout = (self.mode == Mode::Train).then_some(rng);
        let trace = self.head.forward_trace(&bb.trunk, dropout)?;
        let out = self.assemble(bb.map.clone(), &trace)?;
        Ok((out, bb, trace))
    }

    fn assemble(&self, raw: CamoMap, trace: &HeadTrace) -> Result<AnetOutput> {
        let probability = trace.probability();
        Ok(AnetOutput { fused: fuse(&raw, probability)?, raw, probability, logits: trace.logits })
    }

    pub fn backbone_checksum(&self) -> String {
        checksum(self.backbone.params())
    }

    pub fn head_checksum(&self) -> String {
        checksum(self.head.params())
    }
}

/// SHA-256 over the little-endian bytes of a parameter vector.
pub fn checksum(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fuse_examples() {
        let m = CamoMap::new(1, 2, vec![0.4, 0.8]).unwrap();
        assert_eq!(fuse(&m, 1.0).unwrap(), m);
        assert_eq!(fuse(&m, 0.0).unwrap(), CamoMap::zeros(1, 2));
        assert_eq!(fuse(&m, 0.5).unwrap().data(), &[0.2, 0.4]);
        assert!(fuse(&m, 1.5).is_err());
        assert!(fuse(&m, -0.1).is_err());
    }

    #[test]
    fn gating_by_pinned_head() {
        let mut model = AnetModel::reference(0, (16, 16), 8).unwrap();
        let img = ImageGrid::new(16, 16, (0..768).map(|i| (i % 17) as f64 / 16.0).collect()).unwrap();
        model.head.set_output_bias([-1000.0, 1000.0]);
        let out = model.forward(&img).unwrap();
        assert_eq!(out.probability, 0.0);
        assert!(out.fused.data().iter().all(|&v| v == 0.0));
        model.head.set_output_bias([1000.0, -1000.0]);
        let r = model.head.output_layer();
        model.head.params_mut()[r.start..r.end - 2].fill(0.0);
        let out = model.forward(&img).unwrap();
        assert_eq!(out.probability, 1.0);
        assert_eq!(out.fused, out.raw);
    }

    #[test]
    fn eval_forward_repeatable() {
        let model = AnetModel::reference(3, (16, 16), 8).unwrap();
        let img = ImageGrid::new(16, 16, (0..768).map(|i| (i % 7) as f64 / 6.0).collect()).unwrap();
        assert_eq!(model.forward(&img).unwrap(), model.forward(&img).unwrap());
        assert_eq!(model.forward(&img).unwrap().raw, model.backbone_forward(&img).unwrap().map);
    }

    fn map_strategy() -> impl Strategy<Value = CamoMap> {
        proptest::collection::vec(0.0f64..=1.0, 16).prop_map(|v| CamoMap::new(4, 4, v).unwrap())
    }

    proptest! {
        #[test]
        fn fusion_composes(m in map_strategy(), p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
            let once = fuse(&m, p1 * p2).unwrap();
            let twice = fuse(&fuse(&m, p1).unwrap(), p2).unwrap();
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn fusion_monotone(m in map_strategy(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (x, y) = (fuse(&m, lo).unwrap(), fuse(&m, hi).unwrap());
            prop_assert!(x.data().iter().zip(y.data()).all(|(u, v)| u <= v));
        }
    }
}

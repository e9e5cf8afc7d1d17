//! Per-sample losses and their parameter gradients.

use rand_chacha::ChaCha8Rng;

use super::loss::{cls_loss_grad, seg_loss_grad};
use crate::error::Result;
use crate::model::AnetModel;
use crate::types::{ClassLabel, ImageGrid, MaskGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// BCE of the raw map; reaches only the backbone.
    Seg,
    /// Cross-entropy of the head; reaches the head and, through the trunk,
    /// the backbone.
    Cls,
    /// Sum of the two.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLoss {
    pub seg: f64,
    pub cls: f64,
}

impl SampleLoss {
    pub fn value(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Seg => self.seg,
            Objective::Cls => self.cls,
            Objective::Joint => self.seg + self.cls,
        }
    }
}

/// Both stream losses for one sample. Dropout follows the model's mode and
/// draws from `rng`.
pub fn sample_loss(model: &AnetModel, image: &ImageGrid, mask: &MaskGrid, label: ClassLabel, rng: &mut ChaCha8Rng) -> Result<SampleLoss> {
    let (out, _, _) = model.forward_train(image, rng)?;
    Ok(SampleLoss { seg: seg_loss_grad(&out.raw, mask)?.0, cls: cls_loss_grad(out.logits, label)?.0 })
}

/// Adds the gradient of `objective` for one sample into `backbone_grads`
/// and `head_grads`. With `cls_into_trunk` false the classification loss
/// stops at the trunk and leaves the backbone alone.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_gradients(
    model: &AnetModel,
    image: &ImageGrid,
    mask: &MaskGrid,
    label: ClassLabel,
    objective: Objective,
    cls_into_trunk: bool,
    rng: &mut ChaCha8Rng,
    backbone_grads: &mut [f64],
    head_grads: &mut [f64],
) -> Result<SampleLoss> {
    let (out, bb, trace) = model.forward_train(image, rng)?;
    let (seg, g_map) = seg_loss_grad(&out.raw, mask)?;
    let (cls, g_logits) = cls_loss_grad(out.logits, label)?;
    let use_seg = objective != Objective::Cls;
    let use_cls = objective != Objective::Seg;
    let g_trunk = if use_cls {
        let g = model.head.backward(&trace, g_logits, head_grads)?;
        cls_into_trunk.then_some(g)
    } else {
        None
    };
    let g_map = use_seg.then_some(g_map.as_slice());
    if g_map.is_some() || g_trunk.is_some() {
        model.backbone.backward(&bb, g_map, g_trunk.as_deref(), backbone_grads)?;
    }
    Ok(SampleLoss { seg, cls })
}

use crate::error::{Error, Result};
use crate::nn::softmax;
use crate::types::{CamoMap, ClassLabel, MaskGrid};

/// Predictions are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;

/// Mean per-pixel binary cross-entropy of the raw map against the mask.
pub fn seg_loss(raw: &CamoMap, mask: &MaskGrid) -> Result<f64> {
    Ok(seg_loss_grad(raw, mask)?.0)
}

/// BCE and its gradient with respect to each map value. Pixels whose
/// prediction sits outside the clamp band get zero gradient.
pub fn seg_loss_grad(raw: &CamoMap, mask: &MaskGrid) -> Result<(f64, Vec<f64>)> {
    if raw.dims() != mask.dims() {
        return Err(Error::DimensionMismatch { expected: mask.dims(), actual: raw.dims() });
    }
    let n = raw.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(raw.len());
    for (&p, &y) in raw.data().iter().zip(mask.data()) {
        let clamped = p.clamp(EPS, 1.0 - EPS);
        let y = y as f64;
        loss -= y * clamped.ln() + (1.0 - y) * (1.0 - clamped).ln();
        // the clamp is flat outside its range
        let g = if (EPS..=1.0 - EPS).contains(&p) { (-y / clamped + (1.0 - y) / (1.0 - clamped)) / n } else { 0.0 };
        grad.push(g);
    }
    Ok((loss / n, grad))
}

/// Softmax cross-entropy, `-ln softmax(logits)[label]`, via log-sum-exp.
pub fn cls_loss(logits: [f64; 2], label: ClassLabel) -> Result<f64> {
    Ok(cls_loss_grad(logits, label)?.0)
}

pub fn cls_loss_grad(logits: [f64; 2], label: ClassLabel) -> Result<(f64, [f64; 2])> {
    if !logits.iter().all(|l| l.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let k = label.index();
    // With two classes, logsumexp(l) - l[k] = softplus(l[other] - l[k]).
    let d = logits[1 - k] - logits[k];
    let loss = if d > 0.0 { d + (-d).exp().ln_1p() } else { d.exp().ln_1p() };
    let probs = softmax(&logits);
    let mut grad = [probs[0], probs[1]];
    grad[k] -= 1.0;
    Ok((loss, grad))
}

/// Unweighted sum of the two stream losses.
pub fn joint_loss(raw: &CamoMap, mask: &MaskGrid, logits: [f64; 2], label: ClassLabel) -> Result<f64> {
    Ok(seg_loss(raw, mask)? + cls_loss(logits, label)?)
}

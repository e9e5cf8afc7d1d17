//! Per-image segmentation scores and dataset aggregation.
//!
//! Empty-set conventions, used whenever a ratio would be 0/0:
//!
//! | pred  | gt    | P | R | F | IOU |
//! |-------|-------|---|---|---|-----|
//! | empty | empty | 1 | 1 | 1 | 1   |
//! | some  | empty | 0 | 1 | 0 | 0   |
//! | empty | some  | 1 | 0 | 0 | 0   |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CamoMap, ClassLabel, MaskGrid};

pub const BETA2: f64 = 0.3;
pub const FIXED_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch { what: "binary map", expected: height * width, actual: data.len() });
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidGrid("binary map values must be 0 or 1".into()));
        }
        Ok(Self { height, width, data })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub fn confusion(pred: &BinaryMap, gt: &MaskGrid) -> Result<Confusion> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch { expected: gt.dims(), actual: pred.dims() });
    }
    let mut c = Confusion::default();
    for (&p, &g) in pred.data.iter().zip(gt.data()) {
        match (p, g) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => {}
        }
    }
    Ok(c)
}

fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

pub fn precision_recall(pred: &BinaryMap, gt: &MaskGrid) -> Result<(f64, f64)> {
    let c = confusion(pred, gt)?;
    Ok((ratio_or_one(c.tp, c.tp + c.fp), ratio_or_one(c.tp, c.tp + c.fn_)))
}

/// `(1 + b2) P R / (b2 P + R)`, zero when the denominator vanishes.
pub fn f_beta(precision: f64, recall: f64, beta2: f64) -> f64 {
    let den = beta2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / den
    }
}

pub fn iou(pred: &BinaryMap, gt: &MaskGrid) -> Result<f64> {
    let c = confusion(pred, gt)?;
    Ok(ratio_or_one(c.tp, c.tp + c.fp + c.fn_))
}

/// Sums in ascending order so the result does not depend on pixel order;
/// flipped or permuted maps score bit-identically.
fn order_free_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Mean absolute error of the raw (unbinarized) map.
pub fn mae(pred: &CamoMap, gt: &MaskGrid) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch { expected: gt.dims(), actual: pred.dims() });
    }
    let sum = order_free_sum(pred.data().iter().zip(gt.data()).map(|(&p, &g)| (p - g as f64).abs()));
    Ok(sum / pred.len() as f64)
}

/// Mean plus population standard deviation, capped at 1.
pub fn adaptive_threshold(map: &CamoMap) -> Result<f64> {
    if map.is_empty() {
        return Err(Error::Empty("map"));
    }
    let n = map.len() as f64;
    let mean = order_free_sum(map.data().iter().copied()) / n;
    let var = order_free_sum(map.data().iter().map(|v| (v - mean).powi(2))) / n;
    Ok((mean + var.sqrt()).min(1.0))
}

/// Pixel is foreground iff its value is strictly above `theta`.
pub fn binarize(map: &CamoMap, theta: f64) -> BinaryMap {
    BinaryMap { height: map.height(), width: map.width(), data: map.data().iter().map(|&v| (v > theta) as u8).collect() }
}

/// How a map is binarized before F-beta and IOU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdContext {
    /// Objects assumed present: mean + std of the map.
    Adaptive,
    /// Presence not guaranteed: 0.5.
    Fixed,
}

impl ThresholdContext {
    pub fn threshold(self, map: &CamoMap) -> Result<f64> {
        match self {
            ThresholdContext::Adaptive => adaptive_threshold(map),
            ThresholdContext::Fixed => Ok(FIXED_THRESHOLD),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SampleScores {
    pub mae: f64,
    pub f_adaptive: f64,
    pub iou_adaptive: f64,
    pub f_fixed: f64,
    pub iou_fixed: f64,
}

impl SampleScores {
    pub const COLUMNS: [&'static str; 5] = ["MAE", "F_adaptive", "IOU_adaptive", "F_fixed", "IOU_fixed"];

    pub fn values(&self) -> [f64; 5] {
        [self.mae, self.f_adaptive, self.iou_adaptive, self.f_fixed, self.iou_fixed]
    }
}

/// Scores one prediction. The map is resampled (bilinear, clamped) to the
/// ground-truth resolution first when the sizes differ.
pub fn evaluate_sample(pred: &CamoMap, gt: &MaskGrid) -> Result<SampleScores> {
    let resized;
    let pred = if pred.dims() == gt.dims() {
        pred
    } else {
        resized = pred.resize_bilinear(gt.height(), gt.width());
        &resized
    };
    let mut scores = SampleScores { mae: mae(pred, gt)?, ..SampleScores::default() };
    for ctx in [ThresholdContext::Adaptive, ThresholdContext::Fixed] {
        let bin = binarize(pred, ctx.threshold(pred)?);
        let (p, r) = precision_recall(&bin, gt)?;
        let (f, i) = (f_beta(p, r, BETA2), iou(&bin, gt)?);
        match ctx {
            ThresholdContext::Adaptive => (scores.f_adaptive, scores.iou_adaptive) = (f, i),
            ThresholdContext::Fixed => (scores.f_fixed, scores.iou_fixed) = (f, i),
        }
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<SampleScores>,
    pub means: SampleScores,
    pub n: usize,
    pub accuracy: Option<f64>,
}

impl MetricsReport {
    pub fn from_rows(rows: Vec<SampleScores>) -> Self {
        let n = rows.len();
        let mean = |f: fn(&SampleScores) -> f64| {
            if n == 0 {
                0.0
            } else {
                rows.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let means = SampleScores {
            mae: mean(|r| r.mae),
            f_adaptive: mean(|r| r.f_adaptive),
            iou_adaptive: mean(|r| r.iou_adaptive),
            f_fixed: mean(|r| r.f_fixed),
            iou_fixed: mean(|r| r.iou_fixed),
        };
        Self { rows, means, n, accuracy: None }
    }

    /// Scores of one column across images, in order.
    pub fn column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.values()[index]).collect()
    }
}

pub fn evaluate_dataset(preds: &[CamoMap], gts: &[MaskGrid]) -> Result<MetricsReport> {
    if preds.len() != gts.len() {
        return Err(Error::ShapeMismatch { what: "prediction list", expected: gts.len(), actual: preds.len() });
    }
    let rows = preds.iter().zip(gts).map(|(p, g)| evaluate_sample(p, g)).collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::from_rows(rows))
}

pub fn classification_accuracy(pred: &[ClassLabel], gt: &[ClassLabel]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::Empty("label list"));
    }
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch { what: "label list", expected: gt.len(), actual: pred.len() });
    }
    Ok(pred.iter().zip(gt).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64)
}

/// Accuracy where a probability above 0.5 predicts "camouflaged".
pub fn accuracy_from_probabilities(probs: &[f64], gt: &[ClassLabel]) -> Result<f64> {
    let pred: Vec<ClassLabel> = probs.iter().map(|&p| ClassLabel::from_probability(p)).collect();
    classification_accuracy(&pred, gt)
}

//! Wall-clock comparison of backbone-only and full two-stream inference.

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnetModel, Mode};
use crate::types::ImageGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub images: usize,
    pub warmup: usize,
    pub reps: usize,
    pub backbone_mean_ms: f64,
    pub anet_mean_ms: f64,
    pub backbone_median_ms: f64,
    pub anet_median_ms: f64,
}

impl LatencyReport {
    /// `(anet - backbone) / backbone` on per-image means.
    pub fn overhead(&self) -> f64 {
        (self.anet_mean_ms - self.backbone_mean_ms) / self.backbone_mean_ms
    }

    /// Same ratio on per-image medians; less sensitive to scheduler noise.
    pub fn median_overhead(&self) -> f64 {
        (self.anet_median_ms - self.backbone_median_ms) / self.backbone_median_ms
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Times both configurations on every image. Each image gets `warmup`
/// untimed passes, then `reps` timed passes of each configuration,
/// interleaved so both see the same machine state. A per-image time is the
/// mean over reps; the report carries the mean and median over images.
pub fn benchmark_latency(model: &AnetModel, images: &[ImageGrid], warmup: usize, reps: usize) -> Result<LatencyReport> {
    if images.is_empty() {
        return Err(Error::Empty("benchmark image list"));
    }
    if reps == 0 {
        return Err(Error::OutOfRange { what: "reps", value: 0.0, range: ">= 1" });
    }
    if model.mode != Mode::Eval {
        return Err(Error::Config("latency is measured in eval mode".into()));
    }
    let (h, w) = model.input_resolution();
    let mut backbone_ms = Vec::with_capacity(images.len());
    let mut anet_ms = Vec::with_capacity(images.len());
    for image in images {
        let resized;
        let image = if image.dims() == (h, w) {
            image
        } else {
            resized = image.resize_bilinear(h, w);
            &resized
        };
        for _ in 0..warmup {
            black_box(model.backbone_forward(image)?);
            black_box(model.forward(image)?);
        }
        let (mut bb, mut full) = (0.0, 0.0);
        for _ in 0..reps {
            let start = Instant::now();
            black_box(model.backbone_forward(image)?);
            bb += start.elapsed().as_secs_f64();
            let start = Instant::now();
            black_box(model.forward(image)?);
            full += start.elapsed().as_secs_f64();
        }
        backbone_ms.push(bb * 1e3 / reps as f64);
        anet_ms.push(full * 1e3 / reps as f64);
    }
    let n = images.len() as f64;
    Ok(LatencyReport {
        images: images.len(),
        warmup,
        reps,
        backbone_mean_ms: backbone_ms.iter().sum::<f64>() / n,
        anet_mean_ms: anet_ms.iter().sum::<f64>() / n,
        backbone_median_ms: median(&mut backbone_ms),
        anet_median_ms: median(&mut anet_ms),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rep_gives_positive_times() {
        let model = AnetModel::reference(0, (16, 16), 16).unwrap();
        let r = benchmark_latency(&model, &[ImageGrid::zeros(16, 16)], 0, 1).unwrap();
        assert!(r.backbone_mean_ms > 0.0 && r.backbone_mean_ms.is_finite());
        assert!(r.anet_mean_ms > 0.0 && r.anet_mean_ms.is_finite());
    }

    #[test]
    fn resizes_off_resolution_images() {
        let model = AnetModel::reference(0, (16, 16), 16).unwrap();
        assert!(benchmark_latency(&model, &[ImageGrid::zeros(10, 12)], 0, 1).is_ok());
    }

    #[test]
    fn rejects_empty_and_train_mode() {
        let mut model = AnetModel::reference(0, (16, 16), 16).unwrap();
        assert!(benchmark_latency(&model, &[], 1, 1).is_err());
        assert!(benchmark_latency(&model, &[ImageGrid::zeros(16, 16)], 0, 0).is_err());
        model.mode = Mode::Train;
        assert!(benchmark_latency(&model, &[ImageGrid::zeros(16, 16)], 0, 1).is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

use std::path::PathBuf;

use anet::data::synth_samples;
use anet::manifest::{load_sample, DatasetManifest};
use anet::metrics::{benchmark_latency, LatencyReport};
use anet::ImageGrid;
use anyhow::{bail, Result};
use clap::Args;
use serde::Serialize;

use super::{load_or_build, write_json};
use crate::config::{set, set_path, Override, RunConfig};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Model to time; a fresh model from the config when absent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Images to time on; synthetic images when absent.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Debug, Serialize)]
struct BenchOutput<'a> {
    #[serde(flatten)]
    report: &'a LatencyReport,
    overhead: f64,
    median_overhead: f64,
}

impl BenchArgs {
    pub fn overrides(&self) -> Vec<Override> {
        let mut o = Vec::new();
        if let Some(p) = &self.checkpoint {
            o.push(set_path("model.checkpoint", p));
        }
        if let Some(p) = &self.manifest {
            o.push(set_path("data.manifest", p));
        }
        for (k, v) in [("count", self.count), ("warmup", self.warmup), ("reps", self.reps)] {
            if let Some(v) = v {
                o.push(set(&format!("bench.{k}"), v as i64));
            }
        }
        o
    }

    pub fn run(&self, cfg: &RunConfig) -> Result<()> {
        let model = load_or_build(cfg)?.model;
        let (h, w) = model.input_resolution();
        let count = cfg.bench.count;
        let images: Vec<ImageGrid> = match &cfg.data.manifest {
            Some(path) => {
                let manifest = DatasetManifest::read(path)?;
                manifest
                    .records
                    .iter()
                    .take(count)
                    .map(|r| Ok(load_sample(r, &manifest.root)?.image.resize_bilinear(h, w)))
                    .collect::<Result<_>>()?
            }
            None => {
                let spec = anet::data::SynthSpec { count, height: h, width: w, ..cfg.data.synth_spec() };
                synth_samples(&spec)?.into_iter().map(|s| s.image).collect()
            }
        };
        if images.is_empty() {
            bail!("no images to benchmark");
        }
        let report = benchmark_latency(&model, &images, cfg.bench.warmup, cfg.bench.reps)?;
        if let Some(out) = cfg.prepare_out()? {
            let doc = BenchOutput { report: &report, overhead: report.overhead(), median_overhead: report.median_overhead() };
            write_json(&out.join("bench.json"), &doc)?;
        }
        outln!("{} images at {h}x{w}, warmup {}, reps {}", report.images, report.warmup, report.reps);
        outln!("backbone\tmean {:.3} ms\tmedian {:.3} ms", report.backbone_mean_ms, report.backbone_median_ms);
        outln!("anet\tmean {:.3} ms\tmedian {:.3} ms", report.anet_mean_ms, report.anet_median_ms);
        outln!("overhead\tmean {:.1}%\tmedian {:.1}%", 100.0 * report.overhead(), 100.0 * report.median_overhead());
        Ok(())
    }
}

use std::path::{Path, PathBuf};

use anet::manifest::{load_sample, DatasetManifest};
use anet::metrics::{
    accuracy_from_probabilities, evaluate_dataset, paired_t_test, render_json, render_table_for, MetricsReport, ReportRow, SampleScores,
    SignificanceResult,
};
use anet::{raster, CamoMap, ClassLabel, MaskGrid};
use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use super::predict::{PREDICTIONS_FILE, PREDICTIONS_HEADER};
use super::{infer, load_or_build, write_json, write_text};
use crate::config::{set, set_path, MapKind, Override, RunConfig};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth manifest the predictions were made from.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory written by `predict`.
    #[arg(long, conflicts_with_all = ["from_float", "compare"])]
    predictions: Option<PathBuf>,
    /// Score unquantized maps computed from the checkpoint in memory.
    #[arg(long, requires = "checkpoint")]
    from_float: bool,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Two prediction directories to score and test against each other.
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with = "from_float")]
    compare: Vec<PathBuf>,
    /// Row label; defaults to the prediction directory or checkpoint name.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    map: Option<MapKind>,
    /// adaptive, fixed or both.
    #[arg(long)]
    contexts: Option<anet::metrics::Contexts>,
    #[arg(long)]
    split: Option<anet::Split>,
}

/// Scores plus the per-image rows they came from.
pub struct Scored {
    pub method: String,
    pub report: MetricsReport,
}

#[derive(Debug, Serialize)]
struct MetricTest {
    metric: &'static str,
    #[serde(flatten)]
    result: SignificanceResult,
}

impl EvalArgs {
    pub fn overrides(&self) -> Vec<Override> {
        let mut o = Vec::new();
        if let Some(p) = &self.manifest {
            o.push(set_path("data.manifest", p));
        }
        if let Some(p) = &self.checkpoint {
            o.push(set_path("model.checkpoint", p));
        }
        if let Some(m) = self.map {
            o.push(set("eval.map", m.as_str()));
        }
        if let Some(c) = self.contexts {
            o.push(set("eval.contexts", c.to_string()));
        }
        if let Some(s) = self.split {
            o.push(set("eval.split", s.as_str()));
        }
        o
    }

    pub fn run(&self, cfg: &RunConfig) -> Result<()> {
        let manifest = DatasetManifest::read(cfg.require_manifest()?)?;
        let truth = GroundTruth::load(&manifest, cfg)?;
        let out = cfg.prepare_out()?;

        let mut scored = Vec::new();
        if self.from_float {
            let path = cfg.model.checkpoint.as_deref().context("--from-float needs --checkpoint")?;
            let method = self.method.clone().unwrap_or_else(|| stem(path));
            scored.push(score_checkpoint(cfg, &manifest, &truth, method)?);
        } else if !self.compare.is_empty() {
            for dir in &self.compare {
                scored.push(score_predictions(dir, &truth, cfg.eval.map, stem(dir))?);
            }
        } else {
            let dir = self.predictions.as_deref().context("eval needs --predictions, --from-float or --compare")?;
            let method = self.method.clone().unwrap_or_else(|| stem(dir));
            scored.push(score_predictions(dir, &truth, cfg.eval.map, method)?);
        }

        let rows: Vec<ReportRow> = scored.iter().map(|s| ReportRow::from_report(&s.method, &s.report)).collect();
        let table = render_table_for(&rows, cfg.eval.contexts);
        let tests = match &scored[..] {
            [a, b] => Some((a, b, compare(&a.report, &b.report, cfg.eval.alpha)?)),
            _ => None,
        };
        if let Some(out) = &out {
            write_text(&out.join("report.tsv"), &table)?;
            write_text(&out.join("report.json"), &(render_json(&rows)? + "\n"))?;
            if let Some((_, _, tests)) = &tests {
                write_json(&out.join("significance.json"), tests)?;
            }
        }

        out!("{table}");
        if let Some((a, b, tests)) = &tests {
            outln!("paired t-test {} vs {} (alpha {})", a.method, b.method, cfg.eval.alpha);
            outln!("metric\tt\tdf\tp\tsignificant");
            for t in tests {
                let r = &t.result;
                outln!("{}\t{:.4}\t{}\t{:.4}\t{}", t.metric, r.t, r.df, r.p_value, r.significant);
            }
        }
        Ok(())
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "anet".into())
}

pub struct GroundTruth {
    pub images: Vec<String>,
    pub masks: Vec<MaskGrid>,
    pub labels: Vec<ClassLabel>,
}

impl GroundTruth {
    pub fn load(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<Self> {
        let mut gt = GroundTruth { images: Vec::new(), masks: Vec::new(), labels: Vec::new() };
        for record in manifest.split(cfg.eval.split) {
            let sample = load_sample(record, &manifest.root)?;
            gt.images.push(record.image.display().to_string());
            gt.masks.push(sample.mask);
            gt.labels.push(sample.label);
        }
        if gt.masks.is_empty() {
            bail!("manifest has no {} records", cfg.eval.split);
        }
        Ok(gt)
    }
}

/// Reads a prediction directory, checking that it lists exactly the
/// ground-truth images in manifest order.
pub fn score_predictions(dir: &Path, truth: &GroundTruth, map: MapKind, method: String) -> Result<Scored> {
    let path = dir.join(PREDICTIONS_FILE);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some(PREDICTIONS_HEADER) {
        bail!("{}: missing header '{PREDICTIONS_HEADER}'", path.display());
    }
    let rows: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != truth.images.len() {
        bail!("misaligned predictions: {} lists {} images, the manifest split has {}", path.display(), rows.len(), truth.images.len());
    }
    let mut maps = Vec::with_capacity(rows.len());
    let mut probs = Vec::with_capacity(rows.len());
    for (i, (line, image)) in rows.iter().zip(&truth.images).enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        let [name, p, raw, fused] = fields[..] else {
            bail!("{} line {}: expected 4 tab-separated fields", path.display(), i + 2);
        };
        if name != image {
            bail!("misaligned predictions: {} line {} is '{name}', the manifest has '{image}'", path.display(), i + 2);
        }
        probs.push(p.parse::<f64>().with_context(|| format!("{} line {}: bad probability '{p}'", path.display(), i + 2))?);
        let file = dir.join(if map == MapKind::Raw { raw } else { fused });
        maps.push(CamoMap::from_gray8(&raster::read_gray8(&file)?));
    }
    finish(method, &maps, &probs, truth)
}

/// Scores float maps straight from the model, with no 8-bit round trip.
pub fn score_checkpoint(cfg: &RunConfig, manifest: &DatasetManifest, truth: &GroundTruth, method: String) -> Result<Scored> {
    let model = load_or_build(cfg)?.model;
    let mut maps = Vec::new();
    let mut probs = Vec::new();
    for record in manifest.split(cfg.eval.split) {
        let sample = load_sample(record, &manifest.root)?;
        let pred = infer(&model, &sample.image)?;
        maps.push(if cfg.eval.map == MapKind::Raw { pred.raw } else { pred.fused });
        probs.push(pred.probability);
    }
    finish(method, &maps, &probs, truth)
}

fn finish(method: String, maps: &[CamoMap], probs: &[f64], truth: &GroundTruth) -> Result<Scored> {
    let mut report = evaluate_dataset(maps, &truth.masks)?;
    report.accuracy = Some(accuracy_from_probabilities(probs, &truth.labels)?);
    Ok(Scored { method, report })
}

fn compare(a: &MetricsReport, b: &MetricsReport, alpha: f64) -> Result<Vec<MetricTest>> {
    SampleScores::COLUMNS
        .iter()
        .enumerate()
        .map(|(i, &metric)| Ok(MetricTest { metric, result: paired_t_test(&a.column(i), &b.column(i), alpha)? }))
        .collect()
}

//! The training stages.
//!
//! - `seg`: fine-tune the segmentation stream on camouflaged samples only.
//! - `cls`: train the head on mixed samples with the backbone frozen.
//! - `joint`: optimise the sum of both stream losses over mixed samples,
//!   each stream with its own learning rate.
//!
//! The segmentation loss is always taken on the raw backbone map, never on
//! the fused map. Every stage is a pure function of the initial model, the
//! dataset order and `cfg.seed`.

use std::collections::{BTreeMap, HashMap};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::augment_with;
use super::grad::{accumulate_gradients, Objective};
use super::loss::{cls_loss_grad, seg_loss_grad};
use super::sgd::{sgd_step, OptimizerState};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{AnetModel, Mode};
use crate::types::{ClassLabel, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage: String,
    /// Mean total loss per epoch.
    pub loss_curve: Vec<f64>,
    pub seg_curve: Vec<f64>,
    pub cls_curve: Vec<f64>,
    pub samples: usize,
    /// Inference-mode accuracy on the training samples after the stage,
    /// for stages that train the head.
    pub train_accuracy: Option<f64>,
}

impl TrainReport {
    fn new(stage: &str, samples: usize) -> Self {
        Self {
            stage: stage.to_string(),
            loss_curve: Vec::new(),
            seg_curve: Vec::new(),
            cls_curve: Vec::new(),
            samples,
            train_accuracy: None,
        }
    }
}

fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn flip(cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> bool {
    cfg.augment_flip && rng.random_bool(0.5)
}

fn scale(v: &mut [f64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

/// Fine-tunes the backbone on the camouflaged samples of `dataset`.
/// Non-camouflaged (zero-mask) samples are skipped.
pub fn train_segmentation_stream(model: &mut AnetModel, dataset: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let samples: Vec<&Sample> = dataset.iter().filter(|s| s.label == ClassLabel::Camouflaged).collect();
    if samples.is_empty() {
        return Err(Error::Empty("segmentation training set (no camouflaged samples)"));
    }
    if samples.len() < dataset.len() {
        info!("seg stage: skipping {} zero-mask samples", dataset.len() - samples.len());
    }
    let res = model.input_resolution();
    let mut rng = stage_rng(cfg.seed, 10);
    let mut state = OptimizerState::new(model.backbone.params().len());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = TrainReport::new("seg", samples.len());
    model.mode = Mode::Train;

    for epoch in 0..cfg.epochs_seg {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = vec![0.0; state.velocity.len()];
            for &i in batch {
                let s = augment_with(samples[i], res, flip(cfg, &mut rng));
                let out = model.backbone.forward(&s.image)?;
                let (loss, g_map) = seg_loss_grad(&out.map, &s.mask)?;
                total += loss;
                model.backbone.backward(&out, Some(&g_map), None, &mut grads)?;
            }
            scale(&mut grads, 1.0 / batch.len() as f64);
            sgd_step(model.backbone.params_mut(), &grads, &mut state, cfg.seg_params())?;
        }
        let mean = total / samples.len() as f64;
        info!("seg epoch {}/{}: loss {mean:.5}", epoch + 1, cfg.epochs_seg);
        report.loss_curve.push(mean);
        report.seg_curve.push(mean);
    }
    model.mode = Mode::Eval;
    Ok(report)
}

/// Trains the head on a fixed set of trunk features. Shared by the
/// classification stage, which feeds it frozen-backbone features.
pub fn train_head_on_features<F>(
    model: &mut AnetModel,
    n: usize,
    epochs: usize,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    mut features: F,
) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(usize, bool) -> Result<(std::rc::Rc<Vec<f64>>, ClassLabel)>,
{
    let mut state = OptimizerState::new(model.head.params().len());
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(epochs);
    model.mode = Mode::Train;
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = vec![0.0; state.velocity.len()];
            for &i in batch {
                let flipped = flip(cfg, rng);
                let (trunk, label) = features(i, flipped)?;
                let trace = model.head.forward_trace(&trunk, Some(&mut *rng))?;
                let (loss, g) = cls_loss_grad(trace.logits, label)?;
                total += loss;
                model.head.backward(&trace, g, &mut grads)?;
            }
            scale(&mut grads, 1.0 / batch.len() as f64);
            sgd_step(model.head.params_mut(), &grads, &mut state, cfg.cls_params())?;
        }
        let mean = total / n as f64;
        info!("cls epoch {}/{}: loss {mean:.5}", epoch + 1, epochs);
        curve.push(mean);
    }
    model.mode = Mode::Eval;
    let mut correct = 0;
    for i in 0..n {
        let (trunk, label) = features(i, false)?;
        if ClassLabel::from_probability(model.head.forward(&trunk)?) == label {
            correct += 1;
        }
    }
    Ok((curve, correct as f64 / n as f64))
}

/// Trains the head with the backbone frozen. Backbone parameters are never
/// written, so they stay bitwise identical.
pub fn train_classification_stream(model: &mut AnetModel, dataset: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("classification training set"));
    }
    let camo = dataset.iter().filter(|s| s.label == ClassLabel::Camouflaged).count();
    if camo == 0 || camo == dataset.len() {
        warn!("cls stage: training set contains a single label; the head cannot learn to discriminate");
    }
    let res = model.input_resolution();
    let mut rng = stage_rng(cfg.seed, 11);
    // The backbone is frozen, so trunk features only depend on (sample, flip).
    let backbone = model.backbone.clone();
    let mut cache: HashMap<(usize, bool), std::rc::Rc<Vec<f64>>> = HashMap::new();
    let fetch = |i: usize, flipped: bool| -> Result<(std::rc::Rc<Vec<f64>>, ClassLabel)> {
        let label = dataset[i].label;
        if let Some(t) = cache.get(&(i, flipped)) {
            return Ok((t.clone(), label));
        }
        let s = augment_with(&dataset[i], res, flipped);
        let trunk = std::rc::Rc::new(backbone.forward(&s.image)?.trunk);
        cache.insert((i, flipped), trunk.clone());
        Ok((trunk, label))
    };
    let (curve, acc) = train_head_on_features(model, dataset.len(), cfg.epochs_cls, cfg, &mut rng, fetch)?;
    let mut report = TrainReport::new("cls", dataset.len());
    report.cls_curve = curve.clone();
    report.loss_curve = curve;
    report.train_accuracy = Some(acc);
    Ok(report)
}

/// Joint fine-tuning of both streams on `seg_loss + cls_loss`.
pub fn train_joint(model: &mut AnetModel, dataset: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("joint training set"));
    }
    let res = model.input_resolution();
    let mut rng = stage_rng(cfg.seed, 12);
    let mut bb_state = OptimizerState::new(model.backbone.params().len());
    let mut head_state = OptimizerState::new(model.head.params().len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut report = TrainReport::new("joint", dataset.len());
    model.mode = Mode::Train;

    for epoch in 0..cfg.epochs_joint {
        order.shuffle(&mut rng);
        let (mut seg_total, mut cls_total) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let mut bb_grads = vec![0.0; bb_state.velocity.len()];
            let mut head_grads = vec![0.0; head_state.velocity.len()];
            for &i in batch {
                let s = augment_with(&dataset[i], res, flip(cfg, &mut rng));
                let loss = accumulate_gradients(
                    model,
                    &s.image,
                    &s.mask,
                    s.label,
                    Objective::Joint,
                    cfg.cls_into_trunk,
                    &mut rng,
                    &mut bb_grads,
                    &mut head_grads,
                )?;
                seg_total += loss.seg;
                cls_total += loss.cls;
            }
            let inv = 1.0 / batch.len() as f64;
            scale(&mut bb_grads, inv);
            scale(&mut head_grads, inv);
            sgd_step(model.backbone.params_mut(), &bb_grads, &mut bb_state, cfg.seg_params())?;
            sgd_step(model.head.params_mut(), &head_grads, &mut head_state, cfg.cls_params())?;
        }
        let n = dataset.len() as f64;
        let (seg, cls) = (seg_total / n, cls_total / n);
        info!("joint epoch {}/{}: seg {seg:.5} cls {cls:.5}", epoch + 1, cfg.epochs_joint);
        report.seg_curve.push(seg);
        report.cls_curve.push(cls);
        report.loss_curve.push(seg + cls);
    }
    model.mode = Mode::Eval;
    let mut correct = 0;
    for s in dataset {
        let s = augment_with(s, res, false);
        if ClassLabel::from_probability(model.forward(&s.image)?.probability) == s.label {
            correct += 1;
        }
    }
    report.train_accuracy = Some(correct as f64 / dataset.len() as f64);
    Ok(report)
}

/// A named training protocol.
pub trait TrainingStage: Send + Sync {
    fn name(&self) -> &'static str;

    /// Stages a checkpoint must have completed before this one may run.
    fn prerequisites(&self) -> &'static [&'static str];

    fn run(&self, model: &mut AnetModel, dataset: &[Sample], cfg: &TrainConfig) -> Result<TrainReport>;
}

struct SegStage;
struct ClsStage;
struct JointStage;

impl TrainingStage for SegStage {
    fn name(&self) -> &'static str {
        "seg"
    }

    fn prerequisites(&self) -> &'static [&'static str] {
        &[]
    }

    fn run(&self, model: &mut AnetModel, dataset: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
        train_segmentation_stream(model, dataset, cfg)
    }
}

impl TrainingStage for ClsStage {
    fn name(&self) -> &'static str {
        "cls"
    }

    fn prerequisites(&self) -> &'static [&'static str] {
        &["seg"]
    }

    fn run(&self, model: &mut AnetModel, dataset: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
        train_classification_stream(model, dataset, cfg)
    }
}

impl TrainingStage for JointStage {
    fn name(&self) -> &'static str {
        "joint"
    }

    fn prerequisites(&self) -> &'static [&'static str] {
        &["seg", "cls"]
    }

    fn run(&self, model: &mut AnetModel, dataset: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
        train_joint(model, dataset, cfg)
    }
}

pub struct StageRegistry {
    stages: BTreeMap<&'static str, Box<dyn TrainingStage>>,
}

impl Default for StageRegistry {
    fn default() -> Self {
        let mut reg = Self { stages: BTreeMap::new() };
        reg.register(Box::new(SegStage));
        reg.register(Box::new(ClsStage));
        reg.register(Box::new(JointStage));
        reg
    }
}

impl StageRegistry {
    pub fn register(&mut self, stage: Box<dyn TrainingStage>) {
        self.stages.insert(stage.name(), stage);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.stages.keys().copied()
    }

    pub fn get(&self, name: &str) -> Result<&dyn TrainingStage> {
        self.stages.get(name).map(|s| s.as_ref()).ok_or_else(|| Error::UnknownStrategy {
            kind: "training stage",
            name: name.to_string(),
            known: self.names().collect::<Vec<_>>().join(", "),
        })
    }

    /// Checks `completed` against the stage's prerequisites.
    pub fn check_prerequisites(&self, name: &str, completed: &[String]) -> Result<()> {
        let stage = self.get(name)?;
        for req in stage.prerequisites() {
            if !completed.iter().any(|c| c == req) {
                return Err(Error::MissingPrerequisite { stage: name.to_string(), missing: req.to_string() });
            }
        }
        Ok(())
    }
}

//! Losses, optimizer, augmentation and the training stages.

pub mod augment;
pub mod grad;
pub mod loss;
pub mod sgd;
pub mod stages;

use serde::{Deserialize, Serialize};

pub use augment::{augment, augment_with};
pub use grad::{accumulate_gradients, sample_loss, Objective, SampleLoss};
pub use loss::{cls_loss, cls_loss_grad, joint_loss, seg_loss, seg_loss_grad};
pub use sgd::{sgd_step, OptimizerState, SgdParams};
pub use stages::{
    train_classification_stream, train_head_on_features, train_joint, train_segmentation_stream, StageRegistry, TrainReport, TrainingStage,
};

use crate::error::{Error, Result};

/// Optimizer, schedule and augmentation settings. Defaults are the
/// fine-tuning hyperparameters for pre-trained backbones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_seg: f64,
    pub lr_cls: f64,
    pub epochs_seg: usize,
    pub epochs_cls: usize,
    pub epochs_joint: usize,
    pub seed: u64,
    pub augment_flip: bool,
    /// In joint training, let the classification loss reach the shared trunk.
    pub cls_into_trunk: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 2,
            momentum: 0.9,
            weight_decay: 0.0005,
            lr_seg: 1e-4,
            lr_cls: 1e-6,
            epochs_seg: 10,
            epochs_cls: 3,
            epochs_joint: 10,
            seed: 0,
            augment_flip: true,
            cls_into_trunk: true,
        }
    }
}

impl TrainConfig {
    /// Settings for small synthetic runs with a from-scratch backbone, where
    /// the default rates (tuned for pre-trained weights) barely move.
    pub fn desk() -> Self {
        Self { lr_seg: 0.003, lr_cls: 0.002, epochs_seg: 60, ..Self::default() }
    }

    /// Learning rates must be positive, except that a zero rate is accepted
    /// as an explicit "no update" setting.
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs_seg == 0 || self.epochs_cls == 0 || self.epochs_joint == 0 {
            return Err(Error::Config("epoch counts must be >= 1".into()));
        }
        for (name, lr) in [("lr_seg", self.lr_seg), ("lr_cls", self.lr_cls)] {
            if !lr.is_finite() || lr < 0.0 {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {lr}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::Config("momentum must be in [0, 1) and weight_decay >= 0".into()));
        }
        Ok(())
    }

    pub fn seg_params(&self) -> SgdParams {
        SgdParams { lr: self.lr_seg, momentum: self.momentum, weight_decay: self.weight_decay }
    }

    pub fn cls_params(&self) -> SgdParams {
        SgdParams { lr: self.lr_cls, ..self.seg_params() }
    }
}

//! Segmentation backbones are interchangeable: anything that maps an image to
//! a per-pixel camouflage map and exposes its convolutional trunk can serve as
//! the segmentation stream. Implementations register under a name and are
//! constructed from a [`BackboneConfig`] at runtime.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CamoMap, ImageGrid};

/// Static description of a backbone instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub input_resolution: (usize, usize),
    /// `(channels, h, w)` of the shared feature map handed to the head.
    pub trunk_shape: (usize, usize, usize),
    pub parameter_count: usize,
}

impl BackboneSpec {
    pub fn trunk_len(&self) -> usize {
        let (c, h, w) = self.trunk_shape;
        c * h * w
    }
}

/// Everything needed to rebuild a backbone, persisted in checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    /// Encoder channel widths, shallow to deep.
    pub channels: Vec<usize>,
}

impl BackboneConfig {
    pub fn reference(seed: u64, height: usize, width: usize) -> Self {
        Self { name: super::reference::NAME.to_string(), height, width, seed, channels: super::reference::DEFAULT_CHANNELS.to_vec() }
    }
}

/// Intermediate activations of one forward pass, kept for backprop. Their
/// meaning is private to the backbone that produced them.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub activations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct BackboneOutput {
    pub map: CamoMap,
    /// Flattened trunk features, length `spec().trunk_len()`.
    pub trunk: Vec<f64>,
    pub trace: Trace,
}

pub trait Backbone: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;

    fn spec(&self) -> BackboneSpec;

    fn config(&self) -> &BackboneConfig;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Runs the segmentation stream. The image must already be at the input
    /// resolution.
    fn forward(&self, image: &ImageGrid) -> Result<BackboneOutput>;

    /// Accumulates `dL/dparams` into `grads` given the loss gradient with
    /// respect to the output map values and/or the trunk features.
    fn backward(&self, output: &BackboneOutput, grad_map: Option<&[f64]>, grad_trunk: Option<&[f64]>, grads: &mut [f64]) -> Result<()>;

    fn clone_box(&self) -> Box<dyn Backbone>;
}

impl Clone for Box<dyn Backbone> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

pub type BackboneFactory = fn(&BackboneConfig) -> Result<Box<dyn Backbone>>;

/// Name -> constructor table for segmentation backbones.
#[derive(Clone)]
pub struct BackboneRegistry {
    factories: BTreeMap<String, BackboneFactory>,
}

impl fmt::Debug for BackboneRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl Default for BackboneRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register(super::reference::NAME, super::reference::build_boxed);
        reg
    }
}

impl BackboneRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    /// Registers (or replaces) a factory under `name`.
    pub fn register(&mut self, name: &str, factory: BackboneFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, config: &BackboneConfig) -> Result<Box<dyn Backbone>> {
        let factory = self.factories.get(&config.name).ok_or_else(|| Error::UnknownStrategy {
            kind: "backbone",
            name: config.name.clone(),
            known: self.names().collect::<Vec<_>>().join(", "),
        })?;
        factory(config)
    }
}

//! Anabranch network for camouflaged object segmentation.
//!
//! A segmentation backbone produces a per-pixel camouflage map; a small
//! classification head on the backbone's trunk predicts whether the image
//! contains a camouflaged object at all, and that probability scales the map.
//!
//! Modules:
//! - [`types`], [`manifest`]: domain types and dataset manifests
//! - [`model`]: backbone registry, reference FCN, head, fusion, checkpoints
//! - [`training`]: losses, SGD, augmentation and the training stages
//! - [`metrics`]: MAE / F-beta / IOU, thresholding, t-test, latency
//! - [`data`]: synthetic camouflage generator and dataset assembly

pub mod data;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod raster;
pub mod training;
pub mod types;

pub use error::{Error, Result};
pub use types::{derive_label, AttributeTag, CamoMap, ClassLabel, ImageGrid, MaskGrid, Sample, Source, Split};

//! Merging camouflaged images with zero-mask distractors.

use std::collections::BTreeSet;
use std::path::PathBuf;

use crate::data::synth::class_splits;
use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, ManifestRecord, MaskRef};
use crate::types::{ClassLabel, Source};

#[derive(Debug, Clone)]
pub struct AssemblySpec {
    pub camo: DatasetManifest,
    pub distractor: DatasetManifest,
    pub train_fraction: f64,
    pub seed: u64,
}

impl AssemblySpec {
    pub fn new(camo: DatasetManifest, distractor: DatasetManifest, seed: u64) -> Self {
        Self { camo, distractor, train_fraction: 0.8, seed }
    }
}

fn invalid(message: String) -> Error {
    Error::Manifest { line: 0, message }
}

/// Merges the two manifests. Paths are resolved against each input's root,
/// so the merged manifest has an empty root. Distractors get a zero mask,
/// the non-camouflaged label and the `coco` source unless they carry another
/// non-camo source. Each source is split independently: a seeded shuffle
/// then `round(n * fraction)` records to training.
pub fn assemble_camo_coco(spec: &AssemblySpec) -> Result<DatasetManifest> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::OutOfRange { what: "train fraction", value: spec.train_fraction, range: "(0, 1)" });
    }
    let mut seen = BTreeSet::new();
    let mut camo = Vec::with_capacity(spec.camo.len());
    for (i, r) in spec.camo.records.iter().enumerate() {
        if r.label != ClassLabel::Camouflaged {
            return Err(invalid(format!("camo record {} ({}) is not labelled camouflaged", i + 1, r.image.display())));
        }
        let mask = match &r.mask {
            MaskRef::File(p) => MaskRef::File(spec.camo.resolve(p)),
            MaskRef::Zero => {
                return Err(invalid(format!("camo record {} ({}) has a zero mask", i + 1, r.image.display())));
            }
        };
        camo.push(ManifestRecord { image: spec.camo.resolve(&r.image), mask, ..r.clone() });
    }
    let mut distractors = Vec::with_capacity(spec.distractor.len());
    for r in &spec.distractor.records {
        distractors.push(ManifestRecord {
            image: spec.distractor.resolve(&r.image),
            mask: MaskRef::Zero,
            label: ClassLabel::NonCamouflaged,
            source: if r.source == Source::Camo { Source::Coco } else { r.source },
            ..r.clone()
        });
    }
    for r in camo.iter().chain(&distractors) {
        if !seen.insert(r.image.clone()) {
            return Err(invalid(format!("image {} listed more than once", r.image.display())));
        }
    }

    for (records, stream) in [(&mut camo, 0u64), (&mut distractors, 1u64)] {
        let indices: Vec<usize> = (0..records.len()).collect();
        for (idx, split) in class_splits(&indices, spec.train_fraction, spec.seed, stream) {
            records[idx].split = split;
        }
    }

    let mut merged = DatasetManifest::new(PathBuf::new());
    merged.records = camo;
    merged.records.extend(distractors);
    Ok(merged)
}

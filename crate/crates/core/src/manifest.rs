//! Line-oriented dataset manifests.
//!
//! One record per line, tab-separated `key=value` fields in any order:
//!
//! ```text
//! image=images/0001.png  mask=masks/0001.png  label=camouflaged  split=train  source=synthetic  attrs=small-object
//! image=coco/0042.png  mask=ZERO  label=non-camouflaged  split=test
//! ```
//!
//! `mask=ZERO` stands for an all-zero mask of the image's size. Blank lines
//! and lines starting with `#` are ignored. Paths are resolved against the
//! manifest root (the directory holding the manifest file); absolute paths
//! are used as is.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::raster;
use crate::types::{derive_label, AttributeTag, ClassLabel, ImageGrid, MaskGrid, Sample, Source, Split};

pub const ZERO_MASK_TOKEN: &str = "ZERO";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaskRef {
    Zero,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub image: PathBuf,
    pub mask: MaskRef,
    pub label: ClassLabel,
    pub split: Split,
    pub source: Source,
    pub attributes: BTreeSet<AttributeTag>,
}

impl ManifestRecord {
    fn parse(line_no: usize, line: &str) -> Result<Self> {
        let err = |message: String| Error::Manifest { line: line_no, message };
        let (mut image, mut mask, mut label, mut split, mut source) = (None, None, None, None, None);
        let mut attributes = BTreeSet::new();
        for field in line.split('\t').map(str::trim).filter(|f| !f.is_empty()) {
            let (key, value) = field.split_once('=').ok_or_else(|| err(format!("field '{field}' is not key=value")))?;
            match key {
                "image" => image = Some(PathBuf::from(value)),
                "mask" => mask = Some(if value == ZERO_MASK_TOKEN { MaskRef::Zero } else { MaskRef::File(PathBuf::from(value)) }),
                "label" => label = Some(value.parse().map_err(err)?),
                "split" => split = Some(value.parse().map_err(err)?),
                "source" => source = Some(value.parse().map_err(err)?),
                "attrs" => {
                    for tag in value.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                        attributes.insert(tag.parse().map_err(err)?);
                    }
                }
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        let label: ClassLabel = label.ok_or_else(|| err("missing 'label'".into()))?;
        Ok(Self {
            image: image.ok_or_else(|| err("missing 'image'".into()))?,
            mask: mask.ok_or_else(|| err("missing 'mask'".into()))?,
            label,
            split: split.ok_or_else(|| err("missing 'split'".into()))?,
            source: source.unwrap_or(match label {
                ClassLabel::Camouflaged => Source::Camo,
                ClassLabel::NonCamouflaged => Source::Coco,
            }),
            attributes,
        })
    }

    fn render(&self) -> String {
        let mask = match &self.mask {
            MaskRef::Zero => ZERO_MASK_TOKEN.to_string(),
            MaskRef::File(p) => p.display().to_string(),
        };
        let attrs: Vec<_> = self.attributes.iter().map(|a| a.as_str()).collect();
        format!(
            "image={}\tmask={}\tlabel={}\tsplit={}\tsource={}\tattrs={}",
            self.image.display(),
            mask,
            self.label,
            self.split,
            self.source,
            attrs.join(",")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), records: Vec::new() }
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            records.push(ManifestRecord::parse(i + 1, line)?);
        }
        Ok(Self { root: root.into(), records })
    }

    /// Reads a manifest file, or `<dir>/manifest.txt` when given a directory.
    pub fn read(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(out, "{}", r.render());
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.root.join(path)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn load_all(&self) -> Result<Vec<Sample>> {
        self.records.iter().map(|r| load_sample(r, &self.root)).collect()
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Sample>> {
        self.split(split).map(|r| load_sample(r, &self.root)).collect()
    }
}

/// Loads the image and mask behind a record and checks the recorded label
/// against the mask content.
pub fn load_sample(record: &ManifestRecord, root: &Path) -> Result<Sample> {
    let image = ImageGrid::from_rgb8(&raster::read_rgb8(&root.join(&record.image))?);
    let mask = match &record.mask {
        MaskRef::Zero => MaskGrid::zeros(image.height(), image.width()),
        MaskRef::File(p) => MaskGrid::from_gray8(&raster::read_gray8(&root.join(p))?)?,
    };
    if mask.dims() != image.dims() {
        return Err(Error::DimensionMismatch { expected: image.dims(), actual: mask.dims() });
    }
    let derived = derive_label(&mask);
    if derived != record.label {
        return Err(Error::LabelMismatch { recorded: record.label.to_string(), derived: derived.to_string() });
    }
    Ok(Sample { image, mask, label: derived, attributes: record.attributes.clone(), split: record.split, source: record.source })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Zero-based record index.
    pub record: usize,
    pub image: PathBuf,
    pub message: String,
}

/// Every problem found in a manifest; empty iff every record loads and
/// satisfies the sample invariants.
pub fn validate_manifest(manifest: &DatasetManifest) -> Vec<Violation> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, record) in manifest.records.iter().enumerate() {
        let mut push = |message: String| out.push(Violation { record: i, image: record.image.clone(), message });
        if !seen.insert(manifest.resolve(&record.image)) {
            push("duplicate image path".into());
            continue;
        }
        match load_sample(record, &manifest.root) {
            Ok(sample) => sample.violations().into_iter().for_each(push),
            Err(e) => push(e.to_string()),
        }
    }
    out
}

pub fn validate_manifest_file(path: &Path) -> Result<Vec<Violation>> {
    Ok(validate_manifest(&DatasetManifest::read(path)?))
}

/// Writes a sample's image and mask and returns the matching record, with
/// paths relative to `root`.
pub fn save_sample(sample: &Sample, root: &Path, image_rel: &Path, mask_rel: &Path) -> Result<ManifestRecord> {
    raster::write_rgb8(&root.join(image_rel), &sample.image.to_rgb8())?;
    raster::write_gray8(&root.join(mask_rel), &sample.mask.to_gray8())?;
    Ok(ManifestRecord {
        image: image_rel.to_path_buf(),
        mask: MaskRef::File(mask_rel.to_path_buf()),
        label: sample.label,
        split: sample.split,
        source: sample.source,
        attributes: sample.attributes.clone(),
    })
}

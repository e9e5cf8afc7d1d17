//! Counts and mask-area distribution of a manifest.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::manifest::{DatasetManifest, MaskRef};
use crate::raster;
use crate::types::{AttributeTag, ClassLabel, MaskGrid, Split};

pub const AREA_BUCKETS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct LabelSplitCounts {
    pub camouflaged_train: usize,
    pub camouflaged_test: usize,
    pub non_camouflaged_train: usize,
    pub non_camouflaged_test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetStatistics {
    pub total: usize,
    pub counts: LabelSplitCounts,
    pub by_source: BTreeMap<String, usize>,
    /// Every tag is present, with zero when unused.
    pub attributes: BTreeMap<String, usize>,
    /// Bucket `k` holds mask area ratios in `[k/10, (k+1)/10)`; the last
    /// bucket also takes ratio 1. Zero masks land in bucket 0.
    pub area_histogram: [usize; AREA_BUCKETS],
    /// Mask files that could not be read or decoded; not in the histogram.
    pub unreadable_masks: usize,
}

pub fn area_bucket(ratio: f64) -> usize {
    ((ratio * AREA_BUCKETS as f64).floor() as usize).min(AREA_BUCKETS - 1)
}

/// Never fails: masks that cannot be read are counted, not raised.
pub fn dataset_statistics(manifest: &DatasetManifest) -> DatasetStatistics {
    let mut stats = DatasetStatistics {
        total: manifest.len(),
        counts: LabelSplitCounts::default(),
        by_source: BTreeMap::new(),
        attributes: AttributeTag::ALL.iter().map(|t| (t.as_str().to_string(), 0)).collect(),
        area_histogram: [0; AREA_BUCKETS],
        unreadable_masks: 0,
    };
    for r in &manifest.records {
        let c = &mut stats.counts;
        *match (r.label, r.split) {
            (ClassLabel::Camouflaged, Split::Train) => &mut c.camouflaged_train,
            (ClassLabel::Camouflaged, Split::Test) => &mut c.camouflaged_test,
            (ClassLabel::NonCamouflaged, Split::Train) => &mut c.non_camouflaged_train,
            (ClassLabel::NonCamouflaged, Split::Test) => &mut c.non_camouflaged_test,
        } += 1;
        *stats.by_source.entry(r.source.to_string()).or_default() += 1;
        for tag in &r.attributes {
            *stats.attributes.entry(tag.to_string()).or_default() += 1;
        }
        let ratio = match &r.mask {
            MaskRef::Zero => Some(0.0),
            MaskRef::File(p) => {
                raster::read_gray8(&manifest.resolve(p)).ok().and_then(|img| MaskGrid::from_gray8(&img).ok()).map(|m| m.area_ratio())
            }
        };
        match ratio {
            Some(v) => stats.area_histogram[area_bucket(v)] += 1,
            None => stats.unreadable_masks += 1,
        }
    }
    stats
}

impl fmt::Display for DatasetStatistics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.counts;
        writeln!(f, "samples\t{}", self.total)?;
        writeln!(f, "camouflaged\ttrain={}\ttest={}", c.camouflaged_train, c.camouflaged_test)?;
        writeln!(f, "non-camouflaged\ttrain={}\ttest={}", c.non_camouflaged_train, c.non_camouflaged_test)?;
        for (source, n) in &self.by_source {
            writeln!(f, "source {source}\t{n}")?;
        }
        for (tag, n) in &self.attributes {
            writeln!(f, "attr {tag}\t{n}")?;
        }
        let hist: Vec<String> = self.area_histogram.iter().map(|n| n.to_string()).collect();
        writeln!(f, "mask-area histogram (0.1 buckets)\t{}", hist.join(" "))?;
        write!(f, "unreadable masks\t{}", self.unreadable_masks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::assemble::{assemble_camo_coco, AssemblySpec};

    #[test]
    fn bucket_edges() {
        assert_eq!(area_bucket(0.0), 0);
        assert_eq!(area_bucket(0.099), 0);
        assert_eq!(area_bucket(0.1), 1);
        assert_eq!(area_bucket(0.95), 9);
        assert_eq!(area_bucket(1.0), 9);
    }

    #[test]
    fn table_two_counts() {
        let m = |n: usize, p: &str, label: &str, mask: &str| {
            let text: String = (0..n).map(|i| format!("image={p}{i}.png\tmask={mask}\tlabel={label}\tsplit=train\n")).collect();
            DatasetManifest::parse(&text, format!("/nonexistent/{p}")).unwrap()
        };
        let merged =
            assemble_camo_coco(&AssemblySpec::new(m(1250, "camo", "camouflaged", "m.png"), m(1250, "coco", "non-camouflaged", "ZERO"), 0))
                .unwrap();
        let s = dataset_statistics(&merged);
        assert_eq!(
            s.counts,
            LabelSplitCounts { camouflaged_train: 1000, camouflaged_test: 250, non_camouflaged_train: 1000, non_camouflaged_test: 250 }
        );
        assert_eq!(s.attributes.values().sum::<usize>(), 0);
        assert_eq!(s.attributes.len(), 7);
        assert_eq!(s.area_histogram[0], 1250);
        assert_eq!(s.unreadable_masks, 1250);
    }

    #[test]
    fn synthetic_small_objects_counted() {
        use crate::data::synth::{synth_generate, SynthSpec};
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            count: 200,
            height: 16,
            width: 16,
            non_camouflaged_fraction: 0.5,
            small_object_fraction: 0.5,
            clutter: 0.2,
            ..SynthSpec::default()
        };
        let s = dataset_statistics(&synth_generate(&spec, dir.path()).unwrap());
        assert_eq!(s.attributes["small-object"], 50);
        assert_eq!(s.attributes["background-clutter"], 0);
        assert_eq!(s.unreadable_masks, 0);
        assert_eq!(s.area_histogram.iter().sum::<usize>(), 200);
        assert!(s.area_histogram[0] >= 150);
    }
}

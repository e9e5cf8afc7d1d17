//! Procedural camouflage images with exact masks.
//!
//! Every sample draws from its own ChaCha8 stream `(seed, index)`, and the
//! draws never depend on the blend strength, so varying `alpha` changes only
//! how the foreground is mixed, not where or what it is.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::noise::ValueNoise;
use crate::error::{Error, Result};
use crate::manifest::{save_sample, DatasetManifest, MANIFEST_FILE};
use crate::types::{AttributeTag, ImageGrid, MaskGrid, Sample, Source, Split, SMALL_OBJECT_RATIO};

pub const PROVENANCE_FILE: &str = "provenance.json";
const BLOB_VERTICES: usize = 9;
const SHIFT_MIN: f64 = 0.3;
const SHIFT_SPAN: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeFamily {
    Ellipse,
    BlobPolygon,
}

impl ShapeFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapeFamily::Ellipse => "ellipse",
            ShapeFamily::BlobPolygon => "blob-polygon",
        }
    }
}

impl fmt::Display for ShapeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShapeFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ellipse" => Ok(ShapeFamily::Ellipse),
            "blob-polygon" => Ok(ShapeFamily::BlobPolygon),
            _ => Err(format!("unknown shape family '{s}' (expected ellipse or blob-polygon)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    /// Foreground fill = alpha * background + (1 - alpha) * distinct texture.
    pub alpha: f64,
    pub shape_family: ShapeFamily,
    pub clutter: f64,
    pub small_object_fraction: f64,
    pub non_camouflaged_fraction: f64,
    /// Share of each label class assigned to the training split.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            count: 100,
            height: 64,
            width: 64,
            alpha: 0.6,
            shape_family: ShapeFamily::Ellipse,
            clutter: 0.5,
            small_object_fraction: 0.0,
            non_camouflaged_fraction: 0.5,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("count must be >= 1".into()));
        }
        if self.height < 4 || self.width < 4 {
            return Err(Error::Config(format!("resolution {}x{} is too small (minimum 4x4)", self.height, self.width)));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("clutter", self.clutter),
            ("small_object_fraction", self.small_object_fraction),
            ("non_camouflaged_fraction", self.non_camouflaged_fraction),
            ("train_fraction", self.train_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// Whether sample `index` has no object. Spreads the requested fraction
    /// evenly over indices: exactly `floor(count * fraction)` samples.
    pub fn is_non_camouflaged(&self, index: usize) -> bool {
        spread_pick(index, self.non_camouflaged_fraction)
    }

    /// Whether the `rank`-th camouflaged sample gets a small object.
    pub fn is_small(&self, rank: usize) -> bool {
        spread_pick(rank, self.small_object_fraction)
    }
}

fn spread_pick(i: usize, fraction: f64) -> bool {
    ((i + 1) as f64 * fraction).floor() > (i as f64 * fraction).floor()
}

/// One rendered sample plus the pure background texture behind it.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub sample: Sample,
    pub background: ImageGrid,
}

#[derive(Debug, Clone, Copy)]
struct Palette {
    low: [f64; 3],
    high: [f64; 3],
}

impl Palette {
    /// Colours drawn from the dark band [0.05, 0.45] or light band [0.55, 0.95].
    fn draw(light: bool, rng: &mut impl Rng) -> Self {
        let base = if light { 0.55 } else { 0.05 };
        let mut colour = || std::array::from_fn(|_| base + 0.4 * rng.random::<f64>());
        Self { low: colour(), high: colour() }
    }

    /// Each channel moved by a random amount in [SHIFT_MIN, SHIFT_MIN +
    /// SHIFT_SPAN] in a random direction, reflected when it would leave the
    /// unit range. Close enough to the background that blending hides it.
    fn shifted(&self, rng: &mut impl Rng) -> Self {
        let mut shift = |v: f64| {
            let d = SHIFT_MIN + SHIFT_SPAN * rng.random::<f64>();
            let up = rng.random_bool(0.5);
            let t = if up { v + d } else { v - d };
            let t = if (0.02..=0.98).contains(&t) {
                t
            } else if up {
                v - d
            } else {
                v + d
            };
            t.clamp(0.02, 0.98)
        };
        Self { low: self.low.map(&mut shift), high: self.high.map(&mut shift) }
    }

    fn paint(&self, noise: &[f64], h: usize, w: usize) -> Vec<f64> {
        let n = h * w;
        let mut out = vec![0.0; 3 * n];
        for c in 0..3 {
            for (i, &t) in noise.iter().enumerate() {
                out[c * n + i] = self.low[c] + (self.high[c] - self.low[c]) * t;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Shape {
    cy: f64,
    cx: f64,
    radius: f64,
    aspect: f64,
    angle: f64,
    vertex_scale: [f64; BLOB_VERTICES],
}

impl Shape {
    fn draw(h: usize, w: usize, small: bool, rng: &mut impl Rng) -> Self {
        let side = h.min(w) as f64;
        let (lo, hi) = if small { (0.07, 0.12) } else { (0.18, 0.32) };
        Self {
            cy: h as f64 * rng.random_range(0.3..0.7),
            cx: w as f64 * rng.random_range(0.3..0.7),
            radius: side * rng.random_range(lo..hi),
            aspect: rng.random_range(0.7..1.3),
            angle: rng.random_range(0.0..PI),
            vertex_scale: std::array::from_fn(|_| rng.random_range(0.7..1.3)),
        }
    }

    fn contains(&self, family: ShapeFamily, y: f64, x: f64, scale: f64) -> bool {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let (s, c) = self.angle.sin_cos();
        // rotate into the shape frame
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        let (ru, rv) = (self.radius * scale * self.aspect, self.radius * scale / self.aspect);
        match family {
            ShapeFamily::Ellipse => (u / ru).powi(2) + (v / rv).powi(2) <= 1.0,
            ShapeFamily::BlobPolygon => {
                // star-shaped polygon: radius interpolated between vertices
                let (nu, nv) = (u / ru, v / rv);
                let theta = nv.atan2(nu).rem_euclid(2.0 * PI);
                let step = 2.0 * PI / BLOB_VERTICES as f64;
                let k = ((theta / step).floor() as usize).min(BLOB_VERTICES - 1);
                let t = theta / step - k as f64;
                let r0 = self.vertex_scale[k];
                let r1 = self.vertex_scale[(k + 1) % BLOB_VERTICES];
                // chord between adjacent vertices, in polar form
                let a = step * t;
                let chord = r0 * r1 * step.sin() / (r1 * (step - a).sin() + r0 * a.sin());
                nu.hypot(nv) <= chord
            }
        }
    }

    fn rasterize(&self, family: ShapeFamily, h: usize, w: usize, scale: f64) -> Vec<u8> {
        let mut out = vec![0u8; h * w];
        for r in 0..h {
            for c in 0..w {
                out[r * w + c] = self.contains(family, r as f64 + 0.5, c as f64 + 0.5, scale) as u8;
            }
        }
        out
    }

    /// Mask of the shape, shrunk until a small object is below the size
    /// threshold and forced to cover at least the centre pixel.
    fn mask(&self, family: ShapeFamily, h: usize, w: usize, small: bool) -> Vec<u8> {
        let mut scale = 1.0;
        let mut mask = self.rasterize(family, h, w, scale);
        while small && mask.iter().filter(|&&m| m == 1).count() as f64 >= SMALL_OBJECT_RATIO * (h * w) as f64 {
            scale *= 0.8;
            mask = self.rasterize(family, h, w, scale);
        }
        if mask.iter().all(|&m| m == 0) {
            let r = (self.cy.floor() as usize).min(h - 1);
            let c = (self.cx.floor() as usize).min(w - 1);
            mask[r * w + c] = 1;
        }
        mask
    }
}

/// Splits the indices of one class: a seeded shuffle, then the first
/// `round(n * fraction)` go to training.
pub(crate) fn class_splits(indices: &[usize], fraction: f64, seed: u64, stream: u64) -> Vec<(usize, Split)> {
    let mut order = indices.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let n_train = (indices.len() as f64 * fraction).round() as usize;
    order.into_iter().enumerate().map(|(rank, idx)| (idx, if rank < n_train { Split::Train } else { Split::Test })).collect()
}

/// Split of every sample index, stratified by label.
pub fn synth_splits(spec: &SynthSpec) -> Vec<Split> {
    let (non, camo): (Vec<usize>, Vec<usize>) = (0..spec.count).partition(|&i| spec.is_non_camouflaged(i));
    let mut out = vec![Split::Train; spec.count];
    // streams 0 and 1 shuffle the two classes; samples use streams from 2
    for (idx, split) in
        class_splits(&camo, spec.train_fraction, spec.seed, 0).into_iter().chain(class_splits(&non, spec.train_fraction, spec.seed, 1))
    {
        out[idx] = split;
    }
    out
}

/// Renders sample `index` in memory, without touching the filesystem.
pub fn render_sample(spec: &SynthSpec, index: usize, split: Split) -> Result<Rendered> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 2);

    let light = rng.random_bool(0.5);
    let bg_palette = Palette::draw(light, &mut rng);
    let fg_palette = bg_palette.shifted(&mut rng);
    let bg_noise = ValueNoise::new(4, spec.clutter, &mut rng).render(h, w);
    let fg_noise = ValueNoise::new(8, spec.clutter, &mut rng).render(h, w);

    let camouflaged = !spec.is_non_camouflaged(index);
    let rank = (0..index).filter(|&i| !spec.is_non_camouflaged(i)).count();
    let small = camouflaged && spec.is_small(rank);
    let shape = Shape::draw(h, w, small, &mut rng);

    let background = bg_palette.paint(&bg_noise, h, w);
    let mut pixels = background.clone();
    let mask = if camouflaged {
        let mask = shape.mask(spec.shape_family, h, w, small);
        let distinct = fg_palette.paint(&fg_noise, h, w);
        let n = h * w;
        for c in 0..3 {
            for i in (0..n).filter(|&i| mask[i] == 1) {
                let j = c * n + i;
                pixels[j] = spec.alpha * background[j] + (1.0 - spec.alpha) * distinct[j];
            }
        }
        mask
    } else {
        vec![0u8; h * w]
    };

    let mut sample = Sample::new(ImageGrid::new(h, w, pixels)?, MaskGrid::new(h, w, mask)?, split, Source::Synthetic)?;
    if camouflaged {
        let mut attrs = BTreeSet::new();
        if small {
            attrs.insert(AttributeTag::SmallObject);
        }
        if spec.clutter >= 0.5 {
            attrs.insert(AttributeTag::BackgroundClutter);
        }
        sample.attributes = attrs;
    }
    Ok(Rendered { sample, background: ImageGrid::new(h, w, background)? })
}

/// Renders every sample in memory, splits assigned.
pub fn synth_samples(spec: &SynthSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    synth_splits(spec).into_iter().enumerate().map(|(i, split)| render_sample(spec, i, split).map(|r| r.sample)).collect()
}

#[derive(Debug, Serialize)]
struct Provenance<'a> {
    generator: &'static str,
    spec: &'a SynthSpec,
    camouflaged: usize,
    non_camouflaged: usize,
    train: usize,
    test: usize,
}

/// Writes `images/NNNN.png`, `masks/NNNN.png`, the manifest and a
/// provenance sidecar under `out`.
pub fn synth_generate(spec: &SynthSpec, out: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let digits = spec.count.saturating_sub(1).to_string().len().max(4);
    let mut manifest = DatasetManifest::new(out);
    for (i, split) in synth_splits(spec).into_iter().enumerate() {
        let sample = render_sample(spec, i, split)?.sample;
        let name = format!("{i:0digits$}.png");
        let image_rel = Path::new("images").join(&name);
        let mask_rel = Path::new("masks").join(&name);
        manifest.records.push(save_sample(&sample, out, &image_rel, &mask_rel)?);
    }
    manifest.write(&out.join(MANIFEST_FILE))?;

    let camouflaged = (0..spec.count).filter(|&i| !spec.is_non_camouflaged(i)).count();
    let train = manifest.split(Split::Train).count();
    let provenance = Provenance {
        generator: "value-noise-v1",
        spec,
        camouflaged,
        non_camouflaged: spec.count - camouflaged,
        train,
        test: spec.count - train,
    };
    let path = out.join(PROVENANCE_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&provenance)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{derive_label, ClassLabel};

    fn spec(count: usize) -> SynthSpec {
        SynthSpec { count, height: 32, width: 32, ..SynthSpec::default() }
    }

    #[test]
    fn labels_follow_masks() {
        for family in [ShapeFamily::Ellipse, ShapeFamily::BlobPolygon] {
            let s = SynthSpec { shape_family: family, small_object_fraction: 0.5, ..spec(40) };
            for sample in synth_samples(&s).unwrap() {
                assert_eq!(derive_label(&sample.mask), sample.label);
                assert!(sample.violations().is_empty(), "{:?}", sample.violations());
            }
        }
    }

    #[test]
    fn deterministic_assignment_counts() {
        let s = SynthSpec { non_camouflaged_fraction: 0.5, small_object_fraction: 0.5, ..spec(200) };
        let samples = synth_samples(&s).unwrap();
        let camo: Vec<_> = samples.iter().filter(|x| x.label == ClassLabel::Camouflaged).collect();
        assert_eq!(camo.len(), 100);
        let small = camo.iter().filter(|x| x.attributes.contains(&AttributeTag::SmallObject)).count();
        assert_eq!(small, 50);
        for x in camo.iter().filter(|x| x.attributes.contains(&AttributeTag::SmallObject)) {
            assert!(x.mask.area_ratio() < SMALL_OBJECT_RATIO);
        }
    }

    #[test]
    fn splits_stratified_per_class() {
        let s = SynthSpec { non_camouflaged_fraction: 0.5, ..spec(500) };
        let samples = synth_samples(&s).unwrap();
        let count = |label, split| samples.iter().filter(|x| x.label == label && x.split == split).count();
        assert_eq!(count(ClassLabel::Camouflaged, Split::Train), 200);
        assert_eq!(count(ClassLabel::Camouflaged, Split::Test), 50);
        assert_eq!(count(ClassLabel::NonCamouflaged, Split::Train), 200);
        assert_eq!(count(ClassLabel::NonCamouflaged, Split::Test), 50);
    }

    #[test]
    fn blend_endpoints() {
        let base = spec(4);
        let opaque = render_sample(&SynthSpec { alpha: 1.0, ..base.clone() }, 0, Split::Train).unwrap();
        // alpha = 1: the foreground is exactly the background texture
        assert_eq!(opaque.sample.image, opaque.background);
        assert_eq!(opaque.sample.label, ClassLabel::Camouflaged);
        assert!(!opaque.sample.mask.is_zero());

        let salient = render_sample(&SynthSpec { alpha: 0.0, ..base }, 0, Split::Train).unwrap();
        assert_eq!(salient.sample.mask, opaque.sample.mask);
        assert!(foreground_contrast(&salient) > 0.1);
    }

    fn foreground_contrast(r: &Rendered) -> f64 {
        let n = r.sample.mask.len();
        let (mut sum, mut count) = (0.0, 0);
        for c in 0..3 {
            for i in (0..n).filter(|&i| r.sample.mask.data()[i] == 1) {
                sum += (r.sample.image.data()[c * n + i] - r.background.data()[c * n + i]).abs();
                count += 1;
            }
        }
        sum / count as f64
    }

    #[test]
    fn difficulty_monotone_in_alpha() {
        for index in [0, 2, 4] {
            let contrasts: Vec<f64> = (0..=10)
                .map(|k| {
                    let s = SynthSpec { alpha: k as f64 / 10.0, ..spec(8) };
                    foreground_contrast(&render_sample(&s, index, Split::Train).unwrap())
                })
                .collect();
            for w in contrasts.windows(2) {
                assert!(w[1] <= w[0], "{contrasts:?}");
            }
        }
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(SynthSpec { count: 0, ..spec(1) }.validate().is_err());
        assert!(SynthSpec { alpha: 1.5, ..spec(1) }.validate().is_err());
        assert!(SynthSpec { height: 2, ..spec(1) }.validate().is_err());
    }

    #[test]
    fn files_are_byte_identical_across_runs() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let s = spec(6);
        let ma = synth_generate(&s, a.path()).unwrap();
        synth_generate(&s, b.path()).unwrap();
        for rel in ["manifest.txt", "provenance.json", "images/0000.png", "masks/0003.png", "images/0005.png"] {
            assert_eq!(std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{rel}");
        }
        let loaded = DatasetManifest::read(a.path()).unwrap();
        assert_eq!(loaded.records, ma.records);
        assert!(crate::manifest::validate_manifest(&loaded).is_empty());
    }
}

//! Domain types shared by every module. All grids are immutable after
//! construction except through methods that return new values.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster;

/// Area ratio below which an object counts as small.
pub const SMALL_OBJECT_RATIO: f64 = 0.1;

/// RGB image, channel-major (`[c][y][x]`), values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidGrid(format!("image must be non-empty, got {height}x{width}")));
        }
        if data.len() != Self::CHANNELS * height * width {
            return Err(Error::ShapeMismatch { what: "image data", expected: Self::CHANNELS * height * width, actual: data.len() });
        }
        if let Some(&v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange { what: "image", value: v, range: "[0, 1]" });
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; Self::CHANNELS * height * width] }
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = vec![0.0; 3 * h * w];
        for (x, y, px) in img.enumerate_pixels() {
            let i = y as usize * w + x as usize;
            for c in 0..3 {
                data[c * h * w + i] = px.0[c] as f64 / 255.0;
            }
        }
        Self { height: h, width: w, data }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let (h, w) = (self.height, self.width);
        RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let i = y as usize * w + x as usize;
            image::Rgb([0, 1, 2].map(|c| raster::unit_to_u8(self.data[c * h * w + i])))
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = self.data.clone();
        raster::flip_rows(&mut data, self.width);
        Self { data, ..*self }
    }

    pub fn resize_bilinear(&self, height: usize, width: usize) -> Self {
        let mut data = Vec::with_capacity(3 * height * width);
        for c in 0..3 {
            let plane = raster::resize_bilinear(self.plane(c), self.height, self.width, height, width);
            data.extend(plane.into_iter().map(|v| v.clamp(0.0, 1.0)));
        }
        Self { height, width, data }
    }
}

/// Binary ground-truth mask. An all-zero mask means "no camouflaged object".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskGrid {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl MaskGrid {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidGrid(format!("mask must be non-empty, got {height}x{width}")));
        }
        if data.len() != height * width {
            return Err(Error::ShapeMismatch { what: "mask data", expected: height * width, actual: data.len() });
        }
        if let Some(i) = data.iter().position(|&v| v > 1) {
            return Err(Error::NonBinaryMask { value: data[i], row: i / width, col: i % width });
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0; height * width] }
    }

    /// Maps `{0, 255}` to `{0, 1}`; any other gray level is an error.
    pub fn from_gray8(img: &GrayImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = Vec::with_capacity(w * h);
        for (i, &v) in img.as_raw().iter().enumerate() {
            match v {
                0 => data.push(0),
                255 => data.push(1),
                _ => return Err(Error::NonBinaryMask { value: v, row: i / w, col: i % w }),
            }
        }
        Self::new(h, w, data)
    }

    pub fn to_gray8(&self) -> GrayImage {
        let raw = self.data.iter().map(|&v| v * 255).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, raw).expect("mask buffer size")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn area_ratio(&self) -> f64 {
        self.area() as f64 / self.data.len() as f64
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = self.data.clone();
        raster::flip_rows(&mut data, self.width);
        Self { data, ..*self }
    }

    pub fn resize_nearest(&self, height: usize, width: usize) -> Self {
        Self { height, width, data: raster::resize_nearest(&self.data, self.height, self.width, height, width) }
    }
}

/// Real-valued camouflage prediction in `[0, 1]` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct CamoMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl CamoMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidGrid(format!("map must be non-empty, got {height}x{width}")));
        }
        if data.len() != height * width {
            return Err(Error::ShapeMismatch { what: "map data", expected: height * width, actual: data.len() });
        }
        if let Some(&v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange { what: "camouflage map", value: v, range: "[0, 1]" });
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; height * width] }
    }

    /// A `{0, 1}`-valued map equal to the mask.
    pub fn from_mask(mask: &MaskGrid) -> Self {
        Self { height: mask.height, width: mask.width, data: mask.data.iter().map(|&v| v as f64).collect() }
    }

    pub fn from_gray8(img: &GrayImage) -> Self {
        Self { height: img.height() as usize, width: img.width() as usize, data: img.as_raw().iter().map(|&v| v as f64 / 255.0).collect() }
    }

    pub fn to_gray8(&self) -> GrayImage {
        let raw = self.data.iter().map(|&v| raster::unit_to_u8(v)).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, raw).expect("map buffer size")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = self.data.clone();
        raster::flip_rows(&mut data, self.width);
        Self { data, ..*self }
    }

    /// Bilinear resample, clamped back into `[0, 1]`.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Self {
        let data =
            raster::resize_bilinear(&self.data, self.height, self.width, height, width).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self { height, width, data }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassLabel {
    Camouflaged,
    NonCamouflaged,
}

impl ClassLabel {
    /// Position in the classifier's 2-way output.
    pub fn index(self) -> usize {
        match self {
            ClassLabel::Camouflaged => 0,
            ClassLabel::NonCamouflaged => 1,
        }
    }

    pub fn from_probability(p: f64) -> Self {
        if p > 0.5 {
            ClassLabel::Camouflaged
        } else {
            ClassLabel::NonCamouflaged
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Camouflaged => "camouflaged",
            ClassLabel::NonCamouflaged => "non-camouflaged",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "camouflaged" => Ok(ClassLabel::Camouflaged),
            "non-camouflaged" => Ok(ClassLabel::NonCamouflaged),
            _ => Err(format!("unknown label '{s}'")),
        }
    }
}

/// Camouflaged iff any pixel is foreground.
pub fn derive_label(mask: &MaskGrid) -> ClassLabel {
    if mask.is_zero() {
        ClassLabel::NonCamouflaged
    } else {
        ClassLabel::Camouflaged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeTag {
    ObjectAppearance,
    BackgroundClutter,
    ShapeComplexity,
    SmallObject,
    ObjectOcclusion,
    MultipleObjects,
    Distraction,
}

impl AttributeTag {
    pub const ALL: [AttributeTag; 7] = [
        AttributeTag::ObjectAppearance,
        AttributeTag::BackgroundClutter,
        AttributeTag::ShapeComplexity,
        AttributeTag::SmallObject,
        AttributeTag::ObjectOcclusion,
        AttributeTag::MultipleObjects,
        AttributeTag::Distraction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttributeTag::ObjectAppearance => "object-appearance",
            AttributeTag::BackgroundClutter => "background-clutter",
            AttributeTag::ShapeComplexity => "shape-complexity",
            AttributeTag::SmallObject => "small-object",
            AttributeTag::ObjectOcclusion => "object-occlusion",
            AttributeTag::MultipleObjects => "multiple-objects",
            AttributeTag::Distraction => "distraction",
        }
    }
}

impl fmt::Display for AttributeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttributeTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        AttributeTag::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| format!("unknown attribute '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split '{s}'")),
        }
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// Camouflaged-object images.
    Camo,
    /// Non-camouflaged distractor images.
    Coco,
    Synthetic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Camo => "camo",
            Source::Coco => "coco",
            Source::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "camo" => Ok(Source::Camo),
            "coco" => Ok(Source::Coco),
            "synthetic" => Ok(Source::Synthetic),
            _ => Err(format!("unknown source '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: ImageGrid,
    pub mask: MaskGrid,
    pub label: ClassLabel,
    pub attributes: BTreeSet<AttributeTag>,
    pub split: Split,
    pub source: Source,
}

impl Sample {
    /// Builds a sample whose label is derived from its mask.
    pub fn new(image: ImageGrid, mask: MaskGrid, split: Split, source: Source) -> Result<Self> {
        if image.dims() != mask.dims() {
            return Err(Error::DimensionMismatch { expected: image.dims(), actual: mask.dims() });
        }
        let label = derive_label(&mask);
        Ok(Self { image, mask, label, attributes: BTreeSet::new(), split, source })
    }

    /// Invariant violations of this sample, as human-readable strings.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.image.dims() != self.mask.dims() {
            out.push(format!("image {:?} and mask {:?} dimensions differ", self.image.dims(), self.mask.dims()));
        }
        let derived = derive_label(&self.mask);
        if derived != self.label {
            out.push(format!("label {} but mask implies {}", self.label, derived));
        }
        if self.attributes.contains(&AttributeTag::SmallObject) && self.mask.area_ratio() >= SMALL_OBJECT_RATIO {
            out.push(format!("tagged small-object but mask area ratio is {:.4}", self.mask.area_ratio()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn derive_label_cases() {
        assert_eq!(derive_label(&MaskGrid::zeros(4, 4)), ClassLabel::NonCamouflaged);
        let mut one = vec![0u8; 16];
        one[5] = 1;
        assert_eq!(derive_label(&MaskGrid::new(4, 4, one).unwrap()), ClassLabel::Camouflaged);
        assert_eq!(derive_label(&MaskGrid::new(4, 4, vec![1; 16]).unwrap()), ClassLabel::Camouflaged);
    }

    #[test]
    fn grids_reject_bad_values() {
        assert!(ImageGrid::new(1, 1, vec![0.0, 1.1, 0.0]).is_err());
        assert!(ImageGrid::new(0, 1, vec![]).is_err());
        assert!(matches!(MaskGrid::new(1, 2, vec![0, 2]), Err(Error::NonBinaryMask { value: 2, .. })));
        assert!(CamoMap::new(1, 2, vec![0.5, -0.1]).is_err());
        assert!(CamoMap::new(1, 2, vec![0.5, f64::NAN]).is_err());
    }

    #[test]
    fn mask_from_gray_rejects_intermediate() {
        let img = GrayImage::from_raw(2, 1, vec![0, 128]).unwrap();
        assert!(matches!(MaskGrid::from_gray8(&img), Err(Error::NonBinaryMask { value: 128, .. })));
        let img = GrayImage::from_raw(2, 1, vec![0, 255]).unwrap();
        assert_eq!(MaskGrid::from_gray8(&img).unwrap().data(), &[0, 1]);
    }

    #[test]
    fn small_object_violation() {
        let mut sample =
            Sample::new(ImageGrid::zeros(2, 2), MaskGrid::new(2, 2, vec![1, 0, 0, 0]).unwrap(), Split::Train, Source::Synthetic).unwrap();
        sample.attributes.insert(AttributeTag::SmallObject);
        assert_eq!(sample.violations().len(), 1);
    }

    #[test]
    fn token_round_trip() {
        for t in AttributeTag::ALL {
            assert_eq!(t.as_str().parse::<AttributeTag>().unwrap(), t);
        }
        assert_eq!("non-camouflaged".parse::<ClassLabel>().unwrap(), ClassLabel::NonCamouflaged);
    }

    proptest! {
        #[test]
        fn label_invariant_under_flip(h in 1usize..6, w in 1usize..6, bits in proptest::collection::vec(0u8..2, 36)) {
            let mask = MaskGrid::new(h, w, bits[..h * w].to_vec()).unwrap();
            prop_assert_eq!(derive_label(&mask), derive_label(&mask.flip_horizontal()));
            prop_assert_eq!(mask.flip_horizontal().flip_horizontal(), mask);
        }
    }
}

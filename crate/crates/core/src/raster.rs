//! Plane-level resampling and PNG input/output.
//!
//! Planes are row-major `f64` buffers. Bilinear resampling uses half-pixel
//! centres (the convention of most image libraries), so resizing to the
//! same size is the identity.

use std::path::Path;

use image::{GrayImage, ImageReader, RgbImage};

use crate::error::{Error, Result};

/// Bilinear resample of one plane from `(h, w)` to `(out_h, out_w)`.
pub fn resize_bilinear(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    if h == out_h && w == out_w {
        return src.to_vec();
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let axis = |o: usize, scale: f64, n: usize| -> (usize, usize, f64) {
        let pos = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
        let lo = (pos.floor() as usize).min(n - 1);
        let hi = (lo + 1).min(n - 1);
        (lo, hi, pos - lo as f64)
    };
    let cols: Vec<_> = (0..out_w).map(|x| axis(x, sx, w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, sy, h);
        let r0 = &src[y0 * w..(y0 + 1) * w];
        let r1 = &src[y1 * w..(y1 + 1) * w];
        for &(x0, x1, fx) in &cols {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push(top + (bot - top) * fy);
        }
    }
    out
}

/// Nearest-neighbour resample of one plane.
pub fn resize_nearest<T: Copy>(src: &[T], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<T> {
    if h == out_h && w == out_w {
        return src.to_vec();
    }
    let pick = |o: usize, n_out: usize, n_in: usize| ((o * 2 + 1) * n_in / (n_out * 2)).min(n_in - 1);
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let sy = pick(y, out_h, h);
        for x in 0..out_w {
            out.push(src[sy * w + pick(x, out_w, w)]);
        }
    }
    out
}

/// Mirror every row of a plane in place.
pub fn flip_rows<T>(plane: &mut [T], w: usize) {
    for row in plane.chunks_mut(w) {
        row.reverse();
    }
}

pub fn unit_to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Decode { path: path.to_path_buf(), message: e.to_string() })
}

pub fn read_rgb8(path: &Path) -> Result<RgbImage> {
    Ok(open(path)?.into_rgb8())
}

/// Reads an 8-bit single-channel raster. Colour or 16-bit files are rejected
/// rather than converted.
pub fn read_gray8(path: &Path) -> Result<GrayImage> {
    match open(path)? {
        image::DynamicImage::ImageLuma8(img) => Ok(img),
        other => Err(Error::Decode {
            path: path.to_path_buf(),
            message: format!("expected 8-bit single-channel raster, found {:?}", other.color()),
        }),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

pub fn write_rgb8(path: &Path, img: &RgbImage) -> Result<()> {
    ensure_parent(path)?;
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| Error::Decode { path: path.to_path_buf(), message: e.to_string() })
}

pub fn write_gray8(path: &Path, img: &GrayImage) -> Result<()> {
    ensure_parent(path)?;
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| Error::Decode { path: path.to_path_buf(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_identity_and_constant() {
        let src: Vec<f64> = (0..12).map(|v| v as f64).collect();
        assert_eq!(resize_bilinear(&src, 3, 4, 3, 4), src);
        let flat = vec![0.25; 9];
        for v in resize_bilinear(&flat, 3, 3, 7, 5) {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn bilinear_downsample_averages_pairs() {
        // 1x4 -> 1x2: centres fall exactly between source pixels.
        let out = resize_bilinear(&[0.0, 1.0, 0.0, 1.0], 1, 4, 1, 2);
        assert_eq!(out, vec![0.5, 0.5]);
    }

    #[test]
    fn nearest_upsample_duplicates() {
        let out = resize_nearest(&[1u8, 2, 3, 4], 2, 2, 4, 4);
        assert_eq!(&out[..4], &[1, 1, 2, 2]);
        assert_eq!(&out[12..], &[3, 3, 4, 4]);
    }

    #[test]
    fn flip_mirrors_rows() {
        let mut p = vec![1, 2, 3, 4, 5, 6];
        flip_rows(&mut p, 3);
        assert_eq!(p, vec![3, 2, 1, 6, 5, 4]);
    }
}

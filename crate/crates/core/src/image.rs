//! Grayscale image planes, decoding and resampling.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};

/// Rounds to the nearest integer, with exact halves going up.
#[inline]
pub fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// 8-bit luminance image, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension);
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch { width, height, len: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.len() as f64
    }
}

/// Real-valued plane used between quantization boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatPlane {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl FloatPlane {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension);
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch { width, height, len: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue);
        }
        Ok(Self { width, height, values })
    }

    /// Builds a plane whose values are known to be finite.
    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn to_float(img: &GrayImage) -> FloatPlane {
    let values = img.pixels.iter().map(|&p| p as f64).collect();
    FloatPlane::from_raw(img.width, img.height, values)
}

/// Clamps to `[0, 255]` and rounds half-up.
pub fn from_float(plane: &FloatPlane) -> Result<GrayImage> {
    if plane.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue);
    }
    let pixels = plane
        .values
        .iter()
        .map(|&v| round_half_up(v.clamp(0.0, 255.0)) as u8)
        .collect();
    GrayImage::new(plane.width, plane.height, pixels)
}

/// BT.601 luma, rounded half-up, in exact integer arithmetic.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Decodes a PNG, JPEG or TIFF stream to grayscale.
pub fn decode_to_gray(bytes: &[u8]) -> Result<GrayImage> {
    let format = image::guess_format(bytes).map_err(|_| Error::UnsupportedFormat)?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg | ImageFormat::Tiff) {
        return Err(Error::UnsupportedFormat);
    }
    if format == ImageFormat::Jpeg && !jpeg_has_end_marker(bytes) {
        return Err(Error::CorruptStream("JPEG stream ends before the EOI marker".into()));
    }
    let decoded = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| Error::CorruptStream(e.to_string()))?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension);
    }
    let pixels = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        gray @ (DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_)) => {
            gray.to_luma8().into_raw()
        }
        color => color.to_rgb8().pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
    };
    GrayImage::new(width, height, pixels)
}

// The JPEG decoder tolerates truncated scans and pads them, so truncation is
// detected here instead.
fn jpeg_has_end_marker(bytes: &[u8]) -> bool {
    let tail = &bytes[bytes.len().saturating_sub(64)..];
    tail.windows(2).any(|w| w == [0xFF, 0xD9])
}

pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path)?;
    decode_to_gray(&bytes)
}

/// Lossless 8-bit grayscale PNG encoding.
pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, img.pixels.clone())
        .ok_or(Error::DimensionMismatch { width: img.width, height: img.height, len: img.len() })?;
    let mut out = Cursor::new(Vec::new());
    DynamicImage::ImageLuma8(buf)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(out.into_inner())
}

pub fn write_png(img: &GrayImage, path: &Path) -> Result<()> {
    std::fs::write(path, encode_png(img)?)?;
    Ok(())
}

/// Area-average downscale so that the longer side is at most `max_dim`.
pub fn downscale(img: &GrayImage, max_dim: usize) -> Result<GrayImage> {
    if max_dim == 0 {
        return Err(Error::InvalidArgument("max_dim must be at least 1".into()));
    }
    let longest = img.width.max(img.height);
    if longest <= max_dim {
        return Ok(img.clone());
    }
    let factor = max_dim as f64 / longest as f64;
    let out_w = ((img.width as f64 * factor).round() as usize).clamp(1, max_dim);
    let out_h = ((img.height as f64 * factor).round() as usize).clamp(1, max_dim);

    let col_taps = area_taps(img.width, out_w);
    let row_taps = area_taps(img.height, out_h);

    // Horizontal pass: height x out_w.
    let src = to_float(img);
    let mut horiz = vec![0.0; img.height * out_w];
    crate::par::for_each_row(&mut horiz, out_w, |y, row| {
        let line = &src.values[y * img.width..(y + 1) * img.width];
        for (out, taps) in row.iter_mut().zip(&col_taps) {
            *out = taps.iter().map(|&(i, w)| line[i] * w).sum();
        }
    });

    let mut values = vec![0.0; out_h * out_w];
    crate::par::for_each_row(&mut values, out_w, |y, row| {
        for &(i, w) in &row_taps[y] {
            let line = &horiz[i * out_w..(i + 1) * out_w];
            for (out, &v) in row.iter_mut().zip(line) {
                *out += v * w;
            }
        }
    });
    from_float(&FloatPlane::from_raw(out_w, out_h, values))
}

/// Normalized overlap weights of each output cell against source cells.
fn area_taps(src_len: usize, dst_len: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = ((o + 1) as f64 * scale).min(src_len as f64);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src_len);
            (first..last)
                .filter_map(|s| {
                    let overlap = hi.min(s as f64 + 1.0) - lo.max(s as f64);
                    (overlap > 0.0).then(|| (s, overlap / (hi - lo)))
                })
                .collect()
        })
        .collect()
}

//! Synthetic shift and spin blur.
//!
//! Shift blur averages `extent + 1` copies of the image translated by
//! `0..=extent` pixels along one axis. Spin blur averages `2 * extent + 1`
//! copies rotated by every integer degree in `-extent..=extent` about the
//! pixel-grid center. Both pad by replicating edge pixels and quantize only
//! the final average.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{from_float, to_float, FloatPlane, GrayImage};
use crate::par;

pub const MAX_SPIN_DEGREES: u32 = 180;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    Vertical,
    Horizontal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlurKind {
    ShiftVertical,
    ShiftHorizontal,
    Spin,
}

impl BlurKind {
    /// Short name used on the command line and in file names.
    pub fn tag(self) -> &'static str {
        match self {
            BlurKind::ShiftVertical => "vshift",
            BlurKind::ShiftHorizontal => "hshift",
            BlurKind::Spin => "spin",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlurSpec {
    pub kind: BlurKind,
    /// Pixels for shift blur, degrees for spin blur.
    pub extent: u32,
}

impl BlurSpec {
    pub fn new(kind: BlurKind, extent: u32) -> Self {
        Self { kind, extent }
    }

    pub fn spin(extent: u32) -> Self {
        Self::new(BlurKind::Spin, extent)
    }

    pub fn vshift(extent: u32) -> Self {
        Self::new(BlurKind::ShiftVertical, extent)
    }

    pub fn hshift(extent: u32) -> Self {
        Self::new(BlurKind::ShiftHorizontal, extent)
    }

    pub fn is_identity(&self) -> bool {
        self.extent == 0
    }

    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        match self.kind {
            BlurKind::ShiftVertical => shift_blur(img, Axis::Vertical, self.extent),
            BlurKind::ShiftHorizontal => shift_blur(img, Axis::Horizontal, self.extent),
            BlurKind::Spin => spin_blur(img, self.extent),
        }
    }
}

impl fmt::Display for BlurSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.tag(), self.extent)
    }
}

impl FromStr for BlurSpec {
    type Err = Error;

    /// Parses `spin:10`, `vshift:5` or `hshift:3`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad blur spec `{s}` (want spin:N, vshift:N or hshift:N)"));
        let (kind, extent) = s.split_once(':').ok_or_else(bad)?;
        let kind = match kind.trim() {
            "spin" => BlurKind::Spin,
            "vshift" | "shift_vertical" => BlurKind::ShiftVertical,
            "hshift" | "shift_horizontal" => BlurKind::ShiftHorizontal,
            _ => return Err(bad()),
        };
        let extent = extent.trim().parse().map_err(|_| bad())?;
        if kind == BlurKind::Spin && extent > MAX_SPIN_DEGREES {
            return Err(Error::ExtentTooLarge { extent, limit: MAX_SPIN_DEGREES });
        }
        Ok(Self { kind, extent })
    }
}

pub fn shift_blur(img: &GrayImage, axis: Axis, extent: u32) -> Result<GrayImage> {
    let (w, h) = (img.width(), img.height());
    let limit = match axis {
        Axis::Vertical => h,
        Axis::Horizontal => w,
    } as u32;
    if extent >= limit {
        return Err(Error::ExtentTooLarge { extent, limit: limit.saturating_sub(1) });
    }
    if extent == 0 {
        return Ok(img.clone());
    }
    let src = to_float(img);
    let src = src.values();
    let taps = extent as usize + 1;
    let norm = taps as f64;
    let mut out = vec![0.0; w * h];
    par::for_each_row(&mut out, w, |y, row| match axis {
        Axis::Horizontal => {
            let line = &src[y * w..(y + 1) * w];
            for (x, v) in row.iter_mut().enumerate() {
                let sum: f64 = (0..taps).map(|s| line[x.saturating_sub(s)]).sum();
                *v = sum / norm;
            }
        }
        Axis::Vertical => {
            for (x, v) in row.iter_mut().enumerate() {
                let sum: f64 = (0..taps).map(|s| src[y.saturating_sub(s) * w + x]).sum();
                *v = sum / norm;
            }
        }
    });
    from_float(&FloatPlane::from_raw(w, h, out))
}

pub fn spin_blur(img: &GrayImage, extent: u32) -> Result<GrayImage> {
    if extent > MAX_SPIN_DEGREES {
        return Err(Error::ExtentTooLarge { extent, limit: MAX_SPIN_DEGREES });
    }
    if extent == 0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let src = to_float(img);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let e = extent as i32;
    let rotations: Vec<(f64, f64)> = (-e..=e)
        .map(|deg| {
            let t = (deg as f64).to_radians();
            (t.cos(), t.sin())
        })
        .collect();
    let norm = rotations.len() as f64;

    let mut out = vec![0.0; w * h];
    par::for_each_row(&mut out, w, |y, row| {
        let dy = y as f64 - cy;
        for (x, v) in row.iter_mut().enumerate() {
            let dx = x as f64 - cx;
            let mut sum = 0.0;
            for &(c, s) in &rotations {
                let sx = cx + c * dx + s * dy;
                let sy = cy - s * dx + c * dy;
                sum += bilinear_clamped(&src, sx, sy);
            }
            *v = sum / norm;
        }
    });
    from_float(&FloatPlane::from_raw(w, h, out))
}

/// Bilinear sample with replicate-edge padding.
fn bilinear_clamped(plane: &FloatPlane, x: f64, y: f64) -> f64 {
    let (w, h) = (plane.width(), plane.height());
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = plane.get(x0, y0) * (1.0 - fx) + plane.get(x1, y0) * fx;
    let bottom = plane.get(x0, y1) * (1.0 - fx) + plane.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Clear,
    Blurry,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Clear => "clear",
            Label::Blurry => "blurry",
        }
    }

    /// SVM target: +1 clear, -1 blurry.
    pub fn sign(self) -> f64 {
        match self {
            Label::Clear => 1.0,
            Label::Blurry => -1.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clear" | "+1" | "1" => Ok(Label::Clear),
            "blurry" | "-1" => Ok(Label::Blurry),
            other => Err(Error::InvalidArgument(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthRecord {
    /// Index of the source image in the input list.
    pub source: usize,
    pub image: GrayImage,
    pub label: Label,
    pub spec: Option<BlurSpec>,
    /// Set when a blurry record is pixel-identical to its clear source.
    pub identical_to_source: bool,
}

/// Emits every clear image followed by each of its blurred variants, in
/// input order times spec order.
pub fn synth_corpus(clear_images: &[GrayImage], specs: &[BlurSpec]) -> Result<Vec<SynthRecord>> {
    if clear_images.is_empty() {
        return Err(Error::InvalidArgument("no clear images given".into()));
    }
    let jobs: Vec<(usize, Option<BlurSpec>)> = (0..clear_images.len())
        .flat_map(|i| std::iter::once((i, None)).chain(specs.iter().map(move |s| (i, Some(*s)))))
        .collect();
    par::map(&jobs, |&(i, spec)| {
        let src = &clear_images[i];
        Ok(match spec {
            None => SynthRecord {
                source: i,
                image: src.clone(),
                label: Label::Clear,
                spec: None,
                identical_to_source: false,
            },
            Some(spec) => {
                let image = spec.apply(src)?;
                let identical_to_source = image == *src;
                SynthRecord { source: i, image, label: Label::Blurry, spec: Some(spec), identical_to_source }
            }
        })
    })
    .into_iter()
    .collect()
}

/// Sum of absolute horizontal-neighbour differences.
pub fn total_variation(img: &GrayImage) -> u64 {
    img.pixels()
        .chunks(img.width())
        .map(|row| row.windows(2).map(|p| p[0].abs_diff(p[1]) as u64).sum::<u64>())
        .sum()
}

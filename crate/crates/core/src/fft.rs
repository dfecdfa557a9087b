//! Centered 2D DFT magnitudes and the clear estimate (share of spectral
//! components above `max / divisor`).
//!
//! Transforms are exact-size over arbitrary dimensions; the planner picks
//! mixed-radix, Rader or Bluestein kernels as the lengths require.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::histogram::Histogram;
use crate::image::{FloatPlane, GrayImage};
use crate::par;

pub const DEFAULT_DIVISOR: f64 = 1000.0;
pub const HISTOGRAM_BINS: usize = 64;
/// Lowest log-histogram edge relative to the peak magnitude.
const LOG_HIST_FLOOR: f64 = 1e-12;

/// Row-major complex buffer of `rows x cols`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexPlane {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

fn transform_rows(data: &mut [Complex64], cols: usize, fft: &Arc<dyn Fft<f64>>) {
    let scratch_len = fft.get_inplace_scratch_len();
    par::for_each_row(data, cols, |_, row| {
        let mut scratch = vec![Complex64::default(); scratch_len];
        fft.process_with_scratch(row, &mut scratch);
    });
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); data.len()];
    par::for_each_row(&mut out, rows, |c, line| {
        for (r, v) in line.iter_mut().enumerate() {
            *v = data[r * cols + c];
        }
    });
    out
}

fn transform(plane: &mut ComplexPlane, direction: FftDirection) {
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft(plane.cols, direction);
    let col_fft = planner.plan_fft(plane.rows, direction);
    transform_rows(&mut plane.data, plane.cols, &row_fft);
    let mut t = transpose(&plane.data, plane.rows, plane.cols);
    transform_rows(&mut t, plane.rows, &col_fft);
    plane.data = transpose(&t, plane.cols, plane.rows);
}

/// Unnormalized forward DFT.
pub fn fft2(values: &[f64], rows: usize, cols: usize) -> ComplexPlane {
    assert_eq!(values.len(), rows * cols);
    let mut plane = ComplexPlane {
        rows,
        cols,
        data: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    };
    transform(&mut plane, FftDirection::Forward);
    plane
}

/// Inverse DFT scaled by `1 / (rows * cols)`.
pub fn ifft2(spectrum: &ComplexPlane) -> ComplexPlane {
    let mut plane = spectrum.clone();
    transform(&mut plane, FftDirection::Inverse);
    let scale = 1.0 / (plane.rows * plane.cols) as f64;
    for v in &mut plane.data {
        *v *= scale;
    }
    plane
}

/// Centered magnitude spectrum; DC sits at `(rows / 2, cols / 2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub magnitudes: FloatPlane,
}

impl Spectrum {
    pub fn rows(&self) -> usize {
        self.magnitudes.height()
    }

    pub fn cols(&self) -> usize {
        self.magnitudes.width()
    }

    pub fn dc_index(&self) -> (usize, usize) {
        (self.rows() / 2, self.cols() / 2)
    }
}

pub fn fft2_shifted_magnitude(img: &GrayImage) -> Spectrum {
    let (rows, cols) = (img.height(), img.width());
    let values: Vec<f64> = img.pixels().iter().map(|&p| p as f64).collect();
    let freq = fft2(&values, rows, cols);
    Spectrum { magnitudes: shifted_magnitudes(&freq) }
}

/// `|X|` reindexed so frequency `(0, 0)` lands on `(rows / 2, cols / 2)`.
pub fn shifted_magnitudes(freq: &ComplexPlane) -> FloatPlane {
    let (rows, cols) = (freq.rows, freq.cols);
    let (hr, hc) = (rows / 2, cols / 2);
    let mut out = vec![0.0; rows * cols];
    par::for_each_row(&mut out, cols, |r, line| {
        let src_r = (r + rows - hr) % rows;
        for (c, v) in line.iter_mut().enumerate() {
            let src_c = (c + cols - hc) % cols;
            *v = freq.data[src_r * cols + src_c].norm();
        }
    });
    FloatPlane::from_raw(cols, rows, out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClearEstimate {
    pub gamma: f64,
    pub divisor: f64,
    pub threshold_used: f64,
    pub count_above: u64,
}

pub fn clear_estimate(spec: &Spectrum, divisor: f64) -> Result<ClearEstimate> {
    if !(divisor > 1.0) || !divisor.is_finite() {
        return Err(Error::InvalidArgument(format!("divisor {divisor} must be a finite value > 1")));
    }
    let mags = spec.magnitudes.values();
    let peak = spec.magnitudes.max();
    if !(peak > 0.0) {
        return Err(Error::ZeroImage);
    }
    let threshold = peak / divisor;
    let count = mags.iter().filter(|&&m| m > threshold).count() as u64;
    Ok(ClearEstimate {
        gamma: count as f64 / mags.len() as f64,
        divisor,
        threshold_used: threshold,
        count_above: count,
    })
}

/// `log(1 + |s|)` scaled so the largest value is 255.
pub fn spectrum_log_view(spec: &Spectrum) -> FloatPlane {
    let logs: Vec<f64> = spec.magnitudes.values().iter().map(|m| m.ln_1p()).collect();
    let top = logs.iter().copied().fold(0.0f64, f64::max);
    let values = if top > 0.0 {
        logs.into_iter().map(|v| v / top * 255.0).collect()
    } else {
        logs
    };
    FloatPlane::from_raw(spec.cols(), spec.rows(), values)
}

/// 64 log-spaced bins from `max * 1e-12` (or the smallest positive
/// magnitude, if larger) up to the peak. Smaller magnitudes, zeros
/// included, land in the first bin.
pub fn spectrum_histogram(spec: &Spectrum) -> Histogram {
    let mags = spec.magnitudes.values();
    let peak = spec.magnitudes.max().max(0.0);
    let min_pos = mags.iter().copied().filter(|&m| m > 0.0).fold(f64::INFINITY, f64::min);
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    if !(peak > 0.0) {
        counts[0] = mags.len() as u64;
        return Histogram { edges: vec![0.0; HISTOGRAM_BINS + 1], counts };
    }
    let lo = (peak * LOG_HIST_FLOOR).max(min_pos);
    let (log_lo, log_hi) = (lo.ln(), peak.ln());
    let span = log_hi - log_lo;
    let edges: Vec<f64> = (0..=HISTOGRAM_BINS)
        .map(|i| (log_lo + span * i as f64 / HISTOGRAM_BINS as f64).exp())
        .collect();
    for &m in mags {
        let bin = if span <= 0.0 {
            HISTOGRAM_BINS - 1
        } else if m <= lo {
            0
        } else {
            (((m.ln() - log_lo) / span) * HISTOGRAM_BINS as f64).floor() as usize
        };
        counts[bin.min(HISTOGRAM_BINS - 1)] += 1;
    }
    Histogram { edges, counts }
}

//! Gradient magnitude and direction, their histograms, and the clear
//! coefficient (fraction of pixels with a strong gradient).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{linear_edges, Histogram};
use crate::image::{FloatPlane, GrayImage};
use crate::par;

pub const HISTOGRAM_BINS: usize = 64;
pub const DEFAULT_THRESHOLD: f64 = 1000.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GradientOperator {
    /// 3x3 Sobel, up to 1020 per axis on 8-bit input.
    #[default]
    #[serde(rename = "sobel3")]
    Sobel3,
    /// Unit central difference `f(x+1) - f(x-1)`.
    #[serde(rename = "central")]
    CentralDiff,
}

impl GradientOperator {
    pub fn name(self) -> &'static str {
        match self {
            GradientOperator::Sobel3 => "sobel3",
            GradientOperator::CentralDiff => "central",
        }
    }

    /// Largest magnitude reachable on 8-bit input.
    pub fn max_magnitude(self) -> f64 {
        let per_axis = match self {
            GradientOperator::Sobel3 => 1020.0,
            GradientOperator::CentralDiff => 255.0,
        };
        per_axis * std::f64::consts::SQRT_2
    }

    fn min_side(self) -> usize {
        match self {
            GradientOperator::Sobel3 => 3,
            GradientOperator::CentralDiff => 2,
        }
    }
}

impl fmt::Display for GradientOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GradientOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sobel3" | "sobel" => Ok(GradientOperator::Sobel3),
            "central" | "central_diff" => Ok(GradientOperator::CentralDiff),
            _ => Err(Error::InvalidArgument(format!("unknown gradient operator `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub magnitude: FloatPlane,
    /// Radians in `(-pi, pi]`, `atan2(fx, fy)`.
    pub direction: FloatPlane,
    pub operator: GradientOperator,
}

/// Direction of a gradient with the x partial as the numerator, wrapped to
/// `(-pi, pi]` and zero where both partials vanish.
#[inline]
pub fn direction(fx: f64, fy: f64) -> f64 {
    if fx == 0.0 && fy == 0.0 {
        return 0.0;
    }
    let t = fx.atan2(fy);
    if t <= -PI {
        PI
    } else {
        t
    }
}

pub fn gradient_field(img: &GrayImage, operator: GradientOperator) -> Result<GradientField> {
    let (w, h) = (img.width(), img.height());
    let min = operator.min_side();
    if w < min || h < min {
        return Err(Error::ImageTooSmall { width: w, height: h, operator: operator.name() });
    }
    let px = img.pixels();
    let at = |x: isize, y: isize| -> f64 {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        px[y * w + x] as f64
    };

    let mut interleaved = vec![(0.0, 0.0); w * h];
    par::for_each_row(&mut interleaved, w, |y, row| {
        let y = y as isize;
        for (x, out) in row.iter_mut().enumerate() {
            let x = x as isize;
            let (fx, fy) = match operator {
                GradientOperator::Sobel3 => {
                    let fx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                        - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
                    let fy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                        - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
                    (fx, fy)
                }
                GradientOperator::CentralDiff => {
                    (at(x + 1, y) - at(x - 1, y), at(x, y + 1) - at(x, y - 1))
                }
            };
            *out = (fx.hypot(fy), direction(fx, fy));
        }
    });
    let (mag, dir): (Vec<f64>, Vec<f64>) = interleaved.into_iter().unzip();
    Ok(GradientField {
        magnitude: FloatPlane::from_raw(w, h, mag),
        direction: FloatPlane::from_raw(w, h, dir),
        operator,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientHistograms {
    pub magnitude: Histogram,
    pub direction: Histogram,
    pub total_pixels: u64,
}

pub fn gradient_histograms(field: &GradientField) -> GradientHistograms {
    let g_max = field.operator.max_magnitude();
    let mut magnitude = vec![0u64; HISTOGRAM_BINS];
    for &g in field.magnitude.values() {
        let bin = ((g / g_max) * HISTOGRAM_BINS as f64).floor() as usize;
        magnitude[bin.min(HISTOGRAM_BINS - 1)] += 1;
    }
    // Bins are half-open on the left: (lo, hi].
    let width = 2.0 * PI / HISTOGRAM_BINS as f64;
    let mut direction = vec![0u64; HISTOGRAM_BINS];
    for &t in field.direction.values() {
        let bin = ((t + PI) / width).ceil() as isize - 1;
        direction[bin.clamp(0, HISTOGRAM_BINS as isize - 1) as usize] += 1;
    }
    GradientHistograms {
        magnitude: Histogram { edges: linear_edges(0.0, g_max, HISTOGRAM_BINS), counts: magnitude },
        direction: Histogram { edges: linear_edges(-PI, PI, HISTOGRAM_BINS), counts: direction },
        total_pixels: field.magnitude.len() as u64,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClearCoefficient {
    pub alpha: f64,
    pub threshold: f64,
}

/// Fraction of pixels whose magnitude is strictly above `threshold`.
pub fn clear_coefficient(field: &GradientField, threshold: f64) -> Result<ClearCoefficient> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!("gradient threshold {threshold} must be >= 0")));
    }
    let mags = field.magnitude.values();
    let above = mags.iter().filter(|&&g| g > threshold).count();
    Ok(ClearCoefficient { alpha: above as f64 / mags.len() as f64, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step() -> GrayImage {
        let cols = [0u8, 0, 255, 255, 255];
        GrayImage::from_fn(5, 5, |x, _| cols[x]).unwrap()
    }

    #[test]
    fn constant_image_has_no_gradient() {
        let img = GrayImage::filled(6, 4, 200).unwrap();
        let f = gradient_field(&img, GradientOperator::Sobel3).unwrap();
        assert!(f.magnitude.values().iter().all(|&g| g == 0.0));
        assert!(f.direction.values().iter().all(|&t| t == 0.0));
        let hist = gradient_histograms(&f);
        assert_eq!(hist.magnitude.counts[0], 24);
        // 0 lies in the bin (-pi/32, 0].
        assert_eq!(hist.direction.counts[31], 24);
        assert_eq!(clear_coefficient(&f, 1000.0).unwrap().alpha, 0.0);
    }

    #[test]
    fn sobel_step_response() {
        let f = gradient_field(&step(), GradientOperator::Sobel3).unwrap();
        for y in 0..5 {
            assert_eq!(f.magnitude.get(1, y), 1020.0);
            assert_eq!(f.magnitude.get(2, y), 1020.0);
            assert_eq!(f.direction.get(1, y), PI / 2.0);
            assert_eq!(f.magnitude.get(0, y), 0.0);
            assert_eq!(f.magnitude.get(4, y), 0.0);
        }
        assert_eq!(clear_coefficient(&f, 1000.0).unwrap().alpha, 0.4);
    }

    #[test]
    fn threshold_zero_counts_every_strictly_positive_pixel() {
        let img = GrayImage::from_fn(4, 4, |x, y| ((x * 3 + y * 5) * 9) as u8).unwrap();
        let f = gradient_field(&img, GradientOperator::Sobel3).unwrap();
        assert!(f.magnitude.values().iter().all(|&g| g > 0.0));
        assert_eq!(clear_coefficient(&f, 0.0).unwrap().alpha, 1.0);
    }

    #[test]
    fn magnitude_at_upper_edge_goes_to_last_bin() {
        let g_max = GradientOperator::Sobel3.max_magnitude();
        let mut mag = vec![0.0; 9];
        mag[4] = g_max;
        let field = GradientField {
            magnitude: FloatPlane::new(3, 3, mag).unwrap(),
            direction: FloatPlane::new(3, 3, vec![0.0; 9]).unwrap(),
            operator: GradientOperator::Sobel3,
        };
        let h = gradient_histograms(&field);
        assert_eq!(h.magnitude.counts[63], 1);
        assert_eq!(h.magnitude.counts[0], 8);
    }

    #[test]
    fn direction_range_edges() {
        assert_eq!(direction(0.0, -1.0), PI);
        assert_eq!(direction(-0.0, -1.0), PI);
        assert_eq!(direction(-0.0, -0.0), 0.0);
        assert_eq!(direction(1.0, 0.0), PI / 2.0);
    }

    #[test]
    fn too_small_images_rejected() {
        let img = GrayImage::filled(2, 5, 0).unwrap();
        assert!(matches!(
            gradient_field(&img, GradientOperator::Sobel3),
            Err(Error::ImageTooSmall { .. })
        ));
        assert!(gradient_field(&img, GradientOperator::CentralDiff).is_ok());
    }

    #[test]
    fn central_difference_range() {
        let f = gradient_field(&step(), GradientOperator::CentralDiff).unwrap();
        assert_eq!(f.magnitude.get(1, 2), 255.0);
        assert_eq!(f.magnitude.get(2, 2), 255.0);
        assert_eq!(f.magnitude.get(3, 2), 0.0);
    }

    #[test]
    fn quarter_turn_rotates_direction() {
        // rot(x', y') = img(w - 1 - y', x') sends pixel (x, y) to (y, w - 1 - x)
        // and (fx, fy) to (fy, -fx), which advances atan2(fx, fy) by pi/2.
        let img = GrayImage::from_fn(7, 5, |x, y| ((x * 41 + y * 67 + x * x * y) % 251) as u8).unwrap();
        let (w, h) = (img.width(), img.height());
        let rot = GrayImage::from_fn(h, w, |x, y| img.get(w - 1 - y, x)).unwrap();
        let a = gradient_field(&img, GradientOperator::Sobel3).unwrap();
        let b = gradient_field(&rot, GradientOperator::Sobel3).unwrap();
        for y in 0..h {
            for x in 0..w {
                let (rx, ry) = (y, w - 1 - x);
                let ga = a.magnitude.get(x, y);
                assert!((ga - b.magnitude.get(rx, ry)).abs() < 1e-9);
                if ga > 0.0 {
                    let mut diff = b.direction.get(rx, ry) - a.direction.get(x, y);
                    while diff <= -PI {
                        diff += 2.0 * PI;
                    }
                    while diff > PI {
                        diff -= 2.0 * PI;
                    }
                    assert!((diff - PI / 2.0).abs() < 1e-9, "diff {diff}");
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_image() -> impl Strategy<Value = GrayImage> {
            (3usize..20, 3usize..20).prop_flat_map(|(w, h)| {
                proptest::collection::vec(any::<u8>(), w * h)
                    .prop_map(move |px| GrayImage::new(w, h, px).unwrap())
            })
        }

        proptest! {
            #[test]
            fn histograms_conserve_mass(img in arb_image(), central in any::<bool>()) {
                let op = if central { GradientOperator::CentralDiff } else { GradientOperator::Sobel3 };
                let f = gradient_field(&img, op).unwrap();
                let h = gradient_histograms(&f);
                prop_assert_eq!(h.magnitude.total(), img.len() as u64);
                prop_assert_eq!(h.direction.total(), img.len() as u64);
                prop_assert_eq!(h.total_pixels, img.len() as u64);
            }

            #[test]
            fn field_invariants(img in arb_image()) {
                let f = gradient_field(&img, GradientOperator::Sobel3).unwrap();
                for (&g, &t) in f.magnitude.values().iter().zip(f.direction.values()) {
                    prop_assert!(g >= 0.0 && g <= GradientOperator::Sobel3.max_magnitude() + 1e-9);
                    prop_assert!(t > -PI && t <= PI);
                }
            }

            #[test]
            fn alpha_monotone_in_threshold(img in arb_image(), t1 in 0.0f64..1500.0, t2 in 0.0f64..1500.0) {
                let f = gradient_field(&img, GradientOperator::Sobel3).unwrap();
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                let a_lo = clear_coefficient(&f, lo).unwrap().alpha;
                let a_hi = clear_coefficient(&f, hi).unwrap().alpha;
                prop_assert!(a_hi <= a_lo);
                prop_assert!((0.0..=1.0).contains(&a_lo));
            }
        }
    }
}

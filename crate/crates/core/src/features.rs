//! One-image feature extraction shared by the batch pipeline and `inspect`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classify::{Feature, FeatureParams};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::{fft, gradient, svd};

/// Which of the three features to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSet {
    pub grad: bool,
    pub svd: bool,
    pub fft: bool,
}

impl FeatureSet {
    pub const ALL: FeatureSet = FeatureSet { grad: true, svd: true, fft: true };

    pub fn is_empty(&self) -> bool {
        !(self.grad || self.svd || self.fft)
    }

    pub fn only(feature: Feature) -> Self {
        let mut set = FeatureSet { grad: false, svd: false, fft: false };
        set.insert(feature);
        set
    }

    pub fn insert(&mut self, feature: Feature) {
        match feature {
            Feature::Alpha => self.grad = true,
            Feature::Beta => self.svd = true,
            Feature::Gamma => self.fft = true,
        }
    }

    pub fn contains(&self, feature: Feature) -> bool {
        match feature {
            Feature::Alpha => self.grad,
            Feature::Beta => self.svd,
            Feature::Gamma => self.fft,
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.grad, "grad"), (self.svd, "svd"), (self.fft, "fft")]
            .into_iter()
            .filter_map(|(on, name)| on.then_some(name))
            .collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    /// Comma-separated subset of `grad,svd,fft`.
    fn from_str(s: &str) -> Result<Self> {
        let mut set = FeatureSet { grad: false, svd: false, fft: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "grad" => set.grad = true,
                "svd" => set.svd = true,
                "fft" => set.fft = true,
                other => return Err(Error::InvalidArgument(format!("unknown feature `{other}`"))),
            }
        }
        if set.is_empty() {
            return Err(Error::InvalidArgument("feature set is empty".into()));
        }
        Ok(set)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Features {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
}

pub fn alpha(img: &GrayImage, params: &FeatureParams) -> Result<f64> {
    let field = gradient::gradient_field(img, params.grad_operator)?;
    Ok(gradient::clear_coefficient(&field, params.grad_threshold)?.alpha)
}

pub fn beta(img: &GrayImage, params: &FeatureParams) -> Result<f64> {
    let spectrum = svd::singular_spectrum(img, params.svd_downscale)?;
    Ok(svd::blur_degree(&spectrum, params.svd_k)?.beta)
}

pub fn gamma(img: &GrayImage, params: &FeatureParams) -> Result<f64> {
    let spectrum = fft::fft2_shifted_magnitude(img);
    Ok(fft::clear_estimate(&spectrum, params.fft_divisor)?.gamma)
}

pub fn extract(img: &GrayImage, set: FeatureSet, params: &FeatureParams) -> Result<Features> {
    Ok(Features {
        alpha: set.grad.then(|| alpha(img, params)).transpose()?,
        beta: set.svd.then(|| beta(img, params)).transpose()?,
        gamma: set.fft.then(|| gamma(img, params)).transpose()?,
    })
}

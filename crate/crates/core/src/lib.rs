//! Blur features for no-reference image triage.
//!
//! Three scalar features are computed on 8-bit grayscale images:
//!
//! * `alpha` ([`gradient`]): share of pixels whose gradient magnitude
//!   exceeds a threshold. Sharper images score higher.
//! * `beta` ([`svd`]): share of the nuclear norm held by the `k` largest
//!   singular values. Blurrier images score higher.
//! * `gamma` ([`fft`]): share of centered DFT components above
//!   `max / divisor`. Sharper images score higher.
//!
//! [`blur`] manufactures labeled blurry variants, [`classify`] turns
//! features into decisions, and [`pipeline`] runs all of it over a corpus.

// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blur;
pub mod classify;
pub mod error;
pub mod features;
pub mod fft;
pub mod gradient;
pub mod histogram;
pub mod image;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod svd;

pub use error::{Error, Result};
pub use image::{FloatPlane, GrayImage};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Reference implementations used to check the fast paths, plus random
//! input generators. Shared with the acceptance suite of the CLI crate.
#![allow(dead_code)]

use std::f64::consts::PI;

use geoblur_core::svd::Matrix;
use geoblur_core::GrayImage;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

/// Centered DFT magnitudes by the textbook double sum, DC at
/// `(rows / 2, cols / 2)`, row-major.
pub fn naive_shifted_magnitudes(values: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for u in 0..rows {
        for v in 0..cols {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..rows {
                for x in 0..cols {
                    // Reduce the phase index first so the angle stays small.
                    let phase = ((u * y) % rows) as f64 / rows as f64 + ((v * x) % cols) as f64 / cols as f64;
                    let t = -2.0 * PI * phase;
                    let f = values[y * cols + x];
                    re += f * t.cos();
                    im += f * t.sin();
                }
            }
            let r = (u + rows / 2) % rows;
            let c = (v + cols / 2) % cols;
            out[r * cols + c] = re.hypot(im);
        }
    }
    out
}

/// Singular values as square roots of the eigenvalues of the smaller Gram
/// matrix, descending.
pub fn gram_singular_values(m: &Matrix) -> Vec<f64> {
    let a = DMatrix::from_row_slice(m.rows(), m.cols(), m.data());
    let gram = if m.rows() >= m.cols() { a.transpose() * &a } else { &a * a.transpose() };
    let eig = SymmetricEigen::new(gram);
    let mut sv: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

pub fn random_image(rng: &mut impl Rng, max_side: usize) -> GrayImage {
    let (w, h) = (rng.gen_range(1..=max_side), rng.gen_range(1..=max_side));
    let px = (0..w * h).map(|_| rng.gen()).collect();
    GrayImage::new(w, h, px).unwrap()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Largest absolute difference divided by the largest reference magnitude.
pub fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = got.iter().zip(want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}

pub fn frobenius_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `||A - A_k||_F` against `sqrt(sum_{i>k} sigma_i^2)`, as a relative error.
/// The tail energy comes from the Gram oracle, not from the decomposition
/// under test.
pub fn eckart_young_rel_err(a: &Matrix, k: usize) -> f64 {
    let approx = geoblur_core::svd::svd_of(a).unwrap().truncated(k);
    let got = frobenius_diff(a, &approx);
    let want = gram_singular_values(a).iter().skip(k).map(|s| s * s).sum::<f64>().sqrt();
    if want == 0.0 {
        got
    } else {
        (got - want).abs() / want
    }
}

/// Smooth texture with detail at several scales.
pub fn textured(width: usize, height: usize, seed: u64) -> GrayImage {
    let s = seed as f64;
    GrayImage::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let v = 128.0
            + 60.0 * (0.31 * xf + 0.17 * yf + s).sin()
            + 40.0 * (0.9 * xf - 0.7 * yf + 2.0 * s).cos()
            + 25.0 * ((xf * yf).sqrt() * 1.3 + s).sin();
        v.clamp(0.0, 255.0) as u8
    })
    .unwrap()
}

/// Random 3x3 blocks: sharp edges everywhere and high rank.
pub fn mosaic(width: usize, height: usize, seed: u64) -> GrayImage {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (bw, bh) = (width.div_ceil(3), height.div_ceil(3));
    let blocks: Vec<u8> = (0..bw * bh).map(|_| rng.gen()).collect();
    GrayImage::from_fn(width, height, |x, y| blocks[(y / 3) * bw + x / 3]).unwrap()
}

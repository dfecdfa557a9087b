//! Singular values of the pixel matrix, the blur degree, and rank-k
//! reconstructions.
//!
//! The decomposition is Golub-Kahan: Householder reduction to upper
//! bidiagonal form followed by implicitly shifted QR sweeps on the
//! bidiagonal. Singular vectors are accumulated only when a reconstruction
//! asks for them.

use std::io::Write;

use crate::error::{Error, Result};
use crate::image::{downscale, from_float, to_float, FloatPlane, GrayImage};
use crate::par;

pub const DEFAULT_K: usize = 50;
pub const WIDE_K: usize = 300;
pub const DEFAULT_DOWNSCALE: usize = 1024;
/// QR sweeps allowed per unit of `min(rows, cols)`.
pub const ITERATIONS_PER_DIM: usize = 100;

/// Dense row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::ZeroDimension);
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { width: cols, height: rows, len: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_plane(plane: &FloatPlane) -> Self {
        Self { rows: plane.height(), cols: plane.width(), data: plane.values().to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix { rows: self.cols, cols: self.rows, data }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Thin SVD `A = U diag(sigma) V^T` with the factors stored by singular
/// vector: `u[i]` is the i-th left vector (length `rows`), `v[i]` the i-th
/// right vector (length `cols`).
#[derive(Clone, Debug)]
pub struct Svd {
    pub sigma: Vec<f64>,
    pub u: Matrix,
    pub v: Matrix,
}

impl Svd {
    /// `sum_{i<k} sigma_i u_i v_i^T`, row-major `rows x cols`.
    pub fn truncated(&self, k: usize) -> Matrix {
        let (rows, cols) = (self.u.cols, self.v.cols);
        let k = k.min(self.sigma.len());
        let mut data = vec![0.0; rows * cols];
        par::for_each_row(&mut data, cols, |r, out| {
            for i in 0..k {
                let coef = self.sigma[i] * self.u.get(i, r);
                if coef != 0.0 {
                    for (o, &v) in out.iter_mut().zip(self.v.row(i)) {
                        *o += coef * v;
                    }
                }
            }
        });
        Matrix { rows, cols, data }
    }
}

pub fn singular_values_of(matrix: &Matrix) -> Result<Vec<f64>> {
    decompose(matrix, false).map(|d| d.sigma)
}

pub fn svd_of(matrix: &Matrix) -> Result<Svd> {
    decompose(matrix, true)
}

fn decompose(matrix: &Matrix, want_vectors: bool) -> Result<Svd> {
    // The bidiagonal reduction below needs rows >= cols.
    let transposed = matrix.rows < matrix.cols;
    let work = if transposed { matrix.transpose() } else { matrix.clone() };
    let (sigma, lefts, rights) = golub_kahan(work, want_vectors)?;
    let (u, v) = if transposed { (rights, lefts) } else { (lefts, rights) };
    let empty = || Matrix { rows: 0, cols: 0, data: Vec::new() };
    Ok(Svd { sigma, u: u.unwrap_or_else(empty), v: v.unwrap_or_else(empty) })
}

type Factors = (Vec<f64>, Option<Matrix>, Option<Matrix>);

/// Column chunk width for the parallel column-sum pass.
const COL_CHUNK: usize = 64;

fn golub_kahan(mut a: Matrix, want_vectors: bool) -> Result<Factors> {
    let (m, n) = (a.rows, a.cols);
    debug_assert!(m >= n);
    let nct = (m - 1).min(n);
    let nrt = n.saturating_sub(2);
    let mut s = vec![0.0; n];
    let mut e = vec![0.0; n];
    // Row i of `ut` is column i of U; row i of `vt` is column i of V.
    let mut ut = if want_vectors { vec![0.0; n * m] } else { Vec::new() };
    let mut vt = if want_vectors { vec![0.0; n * n] } else { Vec::new() };
    let mut colsum = vec![0.0; n];

    for k in 0..nct.max(nrt) {
        if k < nct {
            let norm = (k..m).map(|i| a.get(i, k).powi(2)).sum::<f64>().sqrt();
            let mut sk = norm;
            if norm != 0.0 {
                if a.get(k, k) < 0.0 {
                    sk = -sk;
                }
                for i in k..m {
                    a.data[i * n + k] /= sk;
                }
                a.data[k * n + k] += 1.0;
            }
            s[k] = -sk;
        }
        if k < nct && s[k] != 0.0 && k + 1 < n {
            apply_left_reflector(&mut a, k, &mut colsum[k + 1..]);
        }
        e[k + 1..n].copy_from_slice(&a.data[k * n + k + 1..(k + 1) * n]);
        if want_vectors && k < nct {
            for i in k..m {
                ut[k * m + i] = a.get(i, k);
            }
        }
        if k < nrt {
            let norm = e[k + 1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut ek = norm;
            if norm != 0.0 {
                if e[k + 1] < 0.0 {
                    ek = -ek;
                }
                for v in &mut e[k + 1..] {
                    *v /= ek;
                }
                e[k + 1] += 1.0;
            }
            e[k] = -ek;
            if k + 1 < m && e[k] != 0.0 {
                let reflector = e[k + 1..].to_vec();
                apply_right_reflector(&mut a, k, &reflector);
            }
            if want_vectors {
                vt[k * n + k + 1..(k + 1) * n].copy_from_slice(&e[k + 1..]);
            }
        }
    }

    let p = n;
    if nct < n {
        s[nct] = a.get(nct, nct);
    }
    if nrt + 1 < p {
        e[nrt] = a.get(nrt, p - 1);
    }
    e[p - 1] = 0.0;

    if want_vectors {
        accumulate_left(&mut ut, &s, m, n, nct);
        accumulate_right(&mut vt, &e, n, nrt);
    }

    let cap = ITERATIONS_PER_DIM * n;
    let mut rot = Rotations { ut: &mut ut, vt: &mut vt, m, n, active: want_vectors };
    bidiagonal_qr(&mut s, &mut e, &mut rot, cap)?;

    let (lefts, rights) = if want_vectors {
        (Some(Matrix { rows: n, cols: m, data: ut }), Some(Matrix { rows: n, cols: n, data: vt }))
    } else {
        (None, None)
    };
    Ok((s, lefts, rights))
}

/// `A[k.., k+1..] -= v (v^T A[k.., k+1..]) / v_k` with `v = A[k.., k]`.
fn apply_left_reflector(a: &mut Matrix, k: usize, colsum: &mut [f64]) {
    let n = a.cols;
    {
        let a_ref = &*a;
        par::for_each_row(colsum, COL_CHUNK, |chunk, out| {
            let j0 = k + 1 + chunk * COL_CHUNK;
            out.fill(0.0);
            for i in k..a_ref.rows {
                let row = a_ref.row(i);
                let vi = row[k];
                if vi != 0.0 {
                    for (o, &x) in out.iter_mut().zip(&row[j0..]) {
                        *o += vi * x;
                    }
                }
            }
        });
    }
    let pivot = a.get(k, k);
    let coefs: Vec<f64> = colsum.iter().map(|t| -t / pivot).collect();
    par::for_each_row(&mut a.data[k * n..], n, |_, row| {
        let vi = row[k];
        if vi != 0.0 {
            for (x, &c) in row[k + 1..].iter_mut().zip(&coefs) {
                *x += c * vi;
            }
        }
    });
}

/// `A[k+1.., k+1..] -= (A v) v^T / v_0` with `v = e[k+1..]`.
fn apply_right_reflector(a: &mut Matrix, k: usize, v: &[f64]) {
    let n = a.cols;
    let pivot = v[0];
    par::for_each_row(&mut a.data[(k + 1) * n..], n, |_, row| {
        let tail = &mut row[k + 1..];
        let w: f64 = tail.iter().zip(v).map(|(x, y)| x * y).sum();
        let c = -w / pivot;
        for (x, &y) in tail.iter_mut().zip(v) {
            *x += c * y;
        }
    });
}

fn accumulate_left(ut: &mut [f64], s: &[f64], m: usize, n: usize, nct: usize) {
    for j in nct..n {
        let row = &mut ut[j * m..(j + 1) * m];
        row.fill(0.0);
        row[j] = 1.0;
    }
    for k in (0..nct).rev() {
        let (head, tail) = ut.split_at_mut((k + 1) * m);
        let uk = &mut head[k * m..];
        if s[k] != 0.0 {
            let uk_ro: &[f64] = uk;
            let pivot = uk_ro[k];
            par::for_each_row(&mut tail[..(n - k - 1) * m], m, |_, uj| {
                let t: f64 = uk_ro[k..].iter().zip(&uj[k..]).map(|(x, y)| x * y).sum();
                let t = -t / pivot;
                for (y, &x) in uj[k..].iter_mut().zip(&uk_ro[k..]) {
                    *y += t * x;
                }
            });
            for x in &mut uk[k..] {
                *x = -*x;
            }
            uk[k] += 1.0;
            uk[..k].fill(0.0);
        } else {
            uk.fill(0.0);
            uk[k] = 1.0;
        }
    }
}

fn accumulate_right(vt: &mut [f64], e: &[f64], n: usize, nrt: usize) {
    for k in (0..n).rev() {
        let (head, tail) = vt.split_at_mut((k + 1) * n);
        let vk = &mut head[k * n..];
        if k < nrt && e[k] != 0.0 {
            let vk_ro: &[f64] = vk;
            let pivot = vk_ro[k + 1];
            par::for_each_row(&mut tail[..(n - k - 1) * n], n, |_, vj| {
                let t: f64 = vk_ro[k + 1..].iter().zip(&vj[k + 1..]).map(|(x, y)| x * y).sum();
                let t = -t / pivot;
                for (y, &x) in vj[k + 1..].iter_mut().zip(&vk_ro[k + 1..]) {
                    *y += t * x;
                }
            });
        }
        vk.fill(0.0);
        vk[k] = 1.0;
    }
}

/// Givens rotations applied to the accumulated singular vectors.
struct Rotations<'a> {
    ut: &'a mut [f64],
    vt: &'a mut [f64],
    m: usize,
    n: usize,
    active: bool,
}

impl Rotations<'_> {
    /// `(x_i, x_j) <- (c x_i + s x_j, -s x_i + c x_j)` on rows of `buf`.
    fn rotate(buf: &mut [f64], len: usize, i: usize, j: usize, c: f64, s: f64) {
        debug_assert!(i != j);
        let (lo, hi) = (i.min(j), i.max(j));
        let (head, tail) = buf.split_at_mut(hi * len);
        let a = &mut head[lo * len..(lo + 1) * len];
        let b = &mut tail[..len];
        let (xi, xj) = if i < j { (a, b) } else { (b, a) };
        for (p, q) in xi.iter_mut().zip(xj.iter_mut()) {
            let t = c * *p + s * *q;
            *q = -s * *p + c * *q;
            *p = t;
        }
    }

    fn left(&mut self, i: usize, j: usize, c: f64, s: f64) {
        if self.active {
            Self::rotate(self.ut, self.m, i, j, c, s);
        }
    }

    fn right(&mut self, i: usize, j: usize, c: f64, s: f64) {
        if self.active {
            Self::rotate(self.vt, self.n, i, j, c, s);
        }
    }

    fn negate_right(&mut self, k: usize) {
        if self.active {
            for x in &mut self.vt[k * self.n..(k + 1) * self.n] {
                *x = -*x;
            }
        }
    }

    fn swap(&mut self, k: usize) {
        if self.active {
            let (m, n) = (self.m, self.n);
            let (a, b) = self.ut[k * m..(k + 2) * m].split_at_mut(m);
            a.swap_with_slice(b);
            let (a, b) = self.vt[k * n..(k + 2) * n].split_at_mut(n);
            a.swap_with_slice(b);
        }
    }
}

/// Diagonalizes the upper bidiagonal `(s, e)` in place, leaving `s`
/// nonnegative and sorted descending.
fn bidiagonal_qr(s: &mut [f64], e: &mut [f64], rot: &mut Rotations<'_>, cap: usize) -> Result<()> {
    let eps = f64::EPSILON;
    let tiny = 2f64.powi(-966);
    let pp = s.len() - 1;
    let mut p = s.len();
    let mut sweeps = 0usize;

    while p > 0 {
        // Find the largest k < p - 1 with a negligible e[k].
        let mut k = p as isize - 2;
        while k >= 0 {
            let ku = k as usize;
            if e[ku].abs() <= tiny + eps * (s[ku].abs() + s[ku + 1].abs()) {
                e[ku] = 0.0;
                break;
            }
            k -= 1;
        }

        enum Case {
            DeflateLast,
            Split,
            Sweep,
            Converged,
        }

        let case = if k == p as isize - 2 {
            Case::Converged
        } else {
            let mut ks = p as isize - 1;
            while ks > k {
                let ksu = ks as usize;
                let t = if ks != p as isize { e[ksu].abs() } else { 0.0 }
                    + if ks != k + 1 { e[ksu - 1].abs() } else { 0.0 };
                if s[ksu].abs() <= tiny + eps * t {
                    s[ksu] = 0.0;
                    break;
                }
                ks -= 1;
            }
            if ks == k {
                Case::Sweep
            } else if ks == p as isize - 1 {
                Case::DeflateLast
            } else {
                k = ks;
                Case::Split
            }
        };
        let k = (k + 1) as usize;

        match case {
            Case::DeflateLast => {
                let mut f = e[p - 2];
                e[p - 2] = 0.0;
                for j in (k..=p - 2).rev() {
                    let t = s[j].hypot(f);
                    let (cs, sn) = (s[j] / t, f / t);
                    s[j] = t;
                    if j != k {
                        f = -sn * e[j - 1];
                        e[j - 1] *= cs;
                    }
                    rot.right(j, p - 1, cs, sn);
                }
            }
            Case::Split => {
                let mut f = e[k - 1];
                e[k - 1] = 0.0;
                for j in k..p {
                    let t = s[j].hypot(f);
                    let (cs, sn) = (s[j] / t, f / t);
                    s[j] = t;
                    f = -sn * e[j];
                    e[j] *= cs;
                    rot.left(j, k - 1, cs, sn);
                }
            }
            Case::Sweep => {
                sweeps += 1;
                if sweeps > cap {
                    return Err(Error::ConvergenceFailure { cap });
                }
                let scale = s[p - 1]
                    .abs()
                    .max(s[p - 2].abs())
                    .max(e[p - 2].abs())
                    .max(s[k].abs())
                    .max(e[k].abs());
                let sp = s[p - 1] / scale;
                let spm1 = s[p - 2] / scale;
                let epm1 = e[p - 2] / scale;
                let sk = s[k] / scale;
                let ek = e[k] / scale;
                let b = ((spm1 + sp) * (spm1 - sp) + epm1 * epm1) / 2.0;
                let c = (sp * epm1) * (sp * epm1);
                let mut shift = 0.0;
                if b != 0.0 || c != 0.0 {
                    shift = (b * b + c).sqrt();
                    if b < 0.0 {
                        shift = -shift;
                    }
                    shift = c / (b + shift);
                }
                let mut f = (sk + sp) * (sk - sp) + shift;
                let mut g = sk * ek;
                for j in k..p - 1 {
                    let t = f.hypot(g);
                    let (cs, sn) = (f / t, g / t);
                    if j != k {
                        e[j - 1] = t;
                    }
                    f = cs * s[j] + sn * e[j];
                    e[j] = cs * e[j] - sn * s[j];
                    g = sn * s[j + 1];
                    s[j + 1] *= cs;
                    rot.right(j, j + 1, cs, sn);

                    let t = f.hypot(g);
                    let (cs, sn) = (f / t, g / t);
                    s[j] = t;
                    f = cs * e[j] + sn * s[j + 1];
                    s[j + 1] = -sn * e[j] + cs * s[j + 1];
                    g = sn * e[j + 1];
                    e[j + 1] *= cs;
                    rot.left(j, j + 1, cs, sn);
                }
                e[p - 2] = f;
            }
            Case::Converged => {
                let mut k = k;
                if s[k] <= 0.0 {
                    s[k] = if s[k] < 0.0 { -s[k] } else { 0.0 };
                    rot.negate_right(k);
                }
                while k < pp && s[k] < s[k + 1] {
                    s.swap(k, k + 1);
                    rot.swap(k);
                    k += 1;
                }
                p -= 1;
            }
        }
    }
    Ok(())
}

/// Singular values of an image, plus where they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularSpectrum {
    /// Descending, length `min(rows, cols)` of the decomposed matrix.
    pub values: Vec<f64>,
    /// `(rows, cols)` of the input image.
    pub source_dims: (usize, usize),
    /// `(rows, cols)` actually decomposed, when downscaled first.
    pub downscaled_to: Option<(usize, usize)>,
}

impl SingularSpectrum {
    pub fn nuclear_norm(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "sigma"])?;
        for (i, s) in self.values.iter().enumerate() {
            w.write_record([(i + 1).to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn singular_values(img: &GrayImage) -> Result<SingularSpectrum> {
    let values = singular_values_of(&Matrix::from_plane(&to_float(img)))?;
    Ok(SingularSpectrum { values, source_dims: (img.height(), img.width()), downscaled_to: None })
}

/// Like [`singular_values`], optionally area-downscaling first so the longer
/// side is at most `max_dim`.
pub fn singular_spectrum(img: &GrayImage, max_dim: Option<usize>) -> Result<SingularSpectrum> {
    let Some(max_dim) = max_dim else {
        return singular_values(img);
    };
    let small = downscale(img, max_dim)?;
    let mut spectrum = singular_values(&small)?;
    spectrum.source_dims = (img.height(), img.width());
    if (small.width(), small.height()) != (img.width(), img.height()) {
        spectrum.downscaled_to = Some((small.height(), small.width()));
    }
    Ok(spectrum)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlurDegree {
    pub beta: f64,
    pub k: usize,
}

/// Share of the nuclear norm carried by the `k` largest singular values.
pub fn blur_degree(spectrum: &SingularSpectrum, k: usize) -> Result<BlurDegree> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let total = spectrum.nuclear_norm();
    if !(total > 0.0) {
        return Err(Error::ZeroSpectrum);
    }
    let top: f64 = spectrum.values.iter().take(k).sum();
    Ok(BlurDegree { beta: top / total, k })
}

/// Unquantized rank-k reconstruction.
pub fn lowrank_plane(img: &GrayImage, k: usize) -> Result<FloatPlane> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let svd = svd_of(&Matrix::from_plane(&to_float(img)))?;
    let approx = svd.truncated(k);
    Ok(FloatPlane::from_raw(approx.cols, approx.rows, approx.data))
}

/// Rank-k reconstruction, clamped and rounded half-up.
pub fn lowrank_reconstruct(img: &GrayImage, k: usize) -> Result<GrayImage> {
    from_float(&lowrank_plane(img, k)?)
}

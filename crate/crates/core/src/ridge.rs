//! Hessian ridge enhancement and a Canny edge baseline.
//!
//! Second derivatives come from separable Gaussian-derivative kernels of
//! radius `ceil(3σ)` with replicate padding. The sampled kernels are
//! moment-normalized so that they differentiate polynomials up to cubic
//! order exactly, which is what lets them agree with finite differences of
//! the Gaussian-smoothed image on such inputs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{BinaryImage, GrayImage};

#[derive(Debug, Error, PartialEq)]
pub enum RidgeError {
    #[error("sigma must be positive and finite (got {0})")]
    Sigma(f64),
    #[error("response threshold must lie in (0, 1] (got {0})")]
    Threshold(f64),
    #[error("Canny thresholds need 0 <= low <= high (got low={low}, high={high})")]
    CannyThresholds { low: f64, high: f64 },
    #[error("value buffer has {actual} entries, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
}

/// Per-pixel second derivatives at scale `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianField {
    pub width: usize,
    pub height: usize,
    pub sigma: f64,
    pub fxx: Vec<f64>,
    pub fxy: Vec<f64>,
    pub fyy: Vec<f64>,
}

impl HessianField {
    pub fn at(&self, x: usize, y: usize) -> (f64, f64, f64) {
        let i = y * self.width + x;
        (self.fxx[i], self.fxy[i], self.fyy[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    /// Bright lines on a darker background (negative dominant curvature).
    BrightLine,
    DarkLine,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeParams {
    pub sigma: f64,
    /// Fraction of the strongest dominant-eigenvalue magnitude.
    pub response_threshold: f64,
    pub polarity: Polarity,
}

impl Default for RidgeParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            response_threshold: 0.3,
            polarity: Polarity::BrightLine,
        }
    }
}

impl RidgeParams {
    pub fn validate(&self) -> Result<(), RidgeError> {
        check_sigma(self.sigma)?;
        if !(self.response_threshold > 0.0 && self.response_threshold <= 1.0) {
            return Err(RidgeError::Threshold(self.response_threshold));
        }
        Ok(())
    }
}

fn check_sigma(sigma: f64) -> Result<(), RidgeError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(RidgeError::Sigma(sigma));
    }
    Ok(())
}

/// Kernels indexed `-radius..=radius`, applied as `out(x) = Σ k(i) f(x - i)`.
pub(crate) struct GaussianKernels {
    pub smooth: Vec<f64>,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl GaussianKernels {
    pub fn new(sigma: f64) -> Self {
        let radius = (3.0 * sigma).ceil() as usize;
        let offsets: Vec<f64> = (-(radius as i64)..=radius as i64).map(|i| i as f64).collect();
        let s2 = sigma * sigma;
        let raw: Vec<f64> = offsets.iter().map(|&i| (-i * i / (2.0 * s2)).exp()).collect();
        let total: f64 = raw.iter().sum();
        let smooth: Vec<f64> = raw.iter().map(|g| g / total).collect();

        // d/dx: responds with exactly 1 to f(x) = x
        let mut first: Vec<f64> = offsets.iter().zip(&smooth).map(|(&i, &g)| -i / s2 * g).collect();
        let slope: f64 = -offsets.iter().zip(&first).map(|(&i, &k)| i * k).sum::<f64>();
        first.iter_mut().for_each(|k| *k /= slope);

        // d²/dx²: zero response to constants, exactly 2 to f(x) = x²
        let mut second: Vec<f64> = offsets
            .iter()
            .zip(&smooth)
            .map(|(&i, &g)| (i * i / (s2 * s2) - 1.0 / s2) * g)
            .collect();
        let dc: f64 = second.iter().sum();
        second.iter_mut().zip(&smooth).for_each(|(k, g)| *k -= dc * g);
        let curvature: f64 = offsets.iter().zip(&second).map(|(&i, &k)| i * i * k).sum();
        second.iter_mut().for_each(|k| *k *= 2.0 / curvature);

        Self {
            smooth,
            first,
            second,
        }
    }
}

/// Separable convolution with replicate padding: `kx` along rows, `ky` along columns.
pub(crate) fn convolve_separable(
    values: &[f64],
    width: usize,
    height: usize,
    kx: &[f64],
    ky: &[f64],
) -> Vec<f64> {
    let rx = (kx.len() / 2) as i64;
    let ry = (ky.len() / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut rows = vec![0.0; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (j, k) in kx.iter().enumerate() {
                let i = j as i64 - rx;
                acc += k * row[clamp(x as i64 - i, width)];
            }
            rows[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for (j, k) in ky.iter().enumerate() {
            let i = j as i64 - ry;
            let src = clamp(y as i64 - i, height) * width;
            let dst = y * width;
            for x in 0..width {
                out[dst + x] += k * rows[src + x];
            }
        }
    }
    out
}

/// Hessian of an arbitrary real-valued raster.
pub fn hessian_of_values(
    values: &[f64],
    width: usize,
    height: usize,
    sigma: f64,
) -> Result<HessianField, RidgeError> {
    check_sigma(sigma)?;
    if values.len() != width * height {
        return Err(RidgeError::BufferSize {
            expected: width * height,
            actual: values.len(),
        });
    }
    let k = GaussianKernels::new(sigma);
    Ok(HessianField {
        width,
        height,
        sigma,
        fxx: convolve_separable(values, width, height, &k.second, &k.smooth),
        fxy: convolve_separable(values, width, height, &k.first, &k.first),
        fyy: convolve_separable(values, width, height, &k.smooth, &k.second),
    })
}

pub fn hessian_field(img: &GrayImage, sigma: f64) -> Result<HessianField, RidgeError> {
    // derivatives ignore offsets; subtracting the minimum makes that exact
    let floor = img.pixels().iter().copied().min().unwrap_or(0);
    let values: Vec<f64> = img.pixels().iter().map(|&p| f64::from(p - floor)).collect();
    hessian_of_values(&values, img.width(), img.height(), sigma)
}

/// Gaussian-smoothed raster using the same kernel as [`hessian_field`].
pub fn gaussian_smooth(values: &[f64], width: usize, height: usize, sigma: f64) -> Result<Vec<f64>, RidgeError> {
    check_sigma(sigma)?;
    let k = GaussianKernels::new(sigma);
    Ok(convolve_separable(values, width, height, &k.smooth, &k.smooth))
}

/// Eigenvalues of `[[fxx, fxy], [fxy, fyy]]` ordered `|λ1| <= |λ2|`.
pub fn eigenvalues(fxx: f64, fxy: f64, fyy: f64) -> (f64, f64) {
    let half_trace = (fxx + fyy) / 2.0;
    let det = fxx * fyy - fxy * fxy;
    let disc = (half_trace * half_trace - det).max(0.0).sqrt();
    let (lo, hi) = (half_trace - disc, half_trace + disc);
    if lo.abs() <= hi.abs() {
        (lo, hi)
    } else {
        (hi, lo)
    }
}

/// Unit eigenvector of the symmetric matrix for eigenvalue `lambda`.
fn eigenvector(fxx: f64, fxy: f64, fyy: f64, lambda: f64) -> (f64, f64) {
    let a = (fxy, lambda - fxx);
    let b = (lambda - fyy, fxy);
    let na = a.0.hypot(a.1);
    let nb = b.0.hypot(b.1);
    if na.max(nb) <= f64::EPSILON * (fxx.abs() + fyy.abs() + fxy.abs()).max(f64::MIN_POSITIVE) {
        // scalar matrix: any direction works
        return if fxx.abs() >= fyy.abs() { (1.0, 0.0) } else { (0.0, 1.0) };
    }
    if na >= nb {
        (a.0 / na, a.1 / na)
    } else {
        (b.0 / nb, b.1 / nb)
    }
}

/// Nearest 8-neighbourhood step for a direction.
fn step_of(dir: (f64, f64)) -> (i64, i64) {
    let angle = dir.1.atan2(dir.0).to_degrees().rem_euclid(180.0);
    match angle {
        a if !(22.5..157.5).contains(&a) => (1, 0),
        a if a < 67.5 => (1, 1),
        a if a < 112.5 => (0, 1),
        _ => (-1, 1),
    }
}

/// Dominant eigenvalue per pixel, with the cross-ridge direction.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeResponse {
    pub width: usize,
    pub height: usize,
    /// `λ2`, the larger-magnitude eigenvalue.
    pub dominant: Vec<f64>,
    pub step: Vec<(i64, i64)>,
}

pub fn ridge_response(img: &GrayImage, sigma: f64) -> Result<RidgeResponse, RidgeError> {
    let field = hessian_field(img, sigma)?;
    let n = field.width * field.height;
    let mut dominant = Vec::with_capacity(n);
    let mut step = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b, c) = (field.fxx[i], field.fxy[i], field.fyy[i]);
        let (_, l2) = eigenvalues(a, b, c);
        dominant.push(l2);
        step.push(step_of(eigenvector(a, b, c, l2)));
    }
    Ok(RidgeResponse {
        width: field.width,
        height: field.height,
        dominant,
        step,
    })
}

fn polarity_ok(polarity: Polarity, l2: f64) -> bool {
    match polarity {
        Polarity::BrightLine => l2 < 0.0,
        Polarity::DarkLine => l2 > 0.0,
        Polarity::Both => l2 != 0.0,
    }
}

/// Response magnitudes below this (in intensity units) count as flat.
const FLAT: f64 = 1e-9;

/// Binary ridge map: dominant curvature of the requested sign, at least
/// `response_threshold` of the image's strongest `|λ2|`, and a local maximum
/// of `|λ2|` across the ridge.
pub fn ridge_map(img: &GrayImage, params: &RidgeParams) -> Result<BinaryImage, RidgeError> {
    params.validate()?;
    let response = ridge_response(img, params.sigma)?;
    Ok(ridge_map_from_response(&response, params))
}

pub fn ridge_map_from_response(response: &RidgeResponse, params: &RidgeParams) -> BinaryImage {
    let (w, h) = (response.width, response.height);
    let strength: Vec<f64> = response
        .dominant
        .iter()
        .map(|&l2| if polarity_ok(params.polarity, l2) { l2.abs() } else { 0.0 })
        .collect();
    let peak = response.dominant.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = (params.response_threshold * peak).max(FLAT);
    let at = |x: i64, y: i64| strength[y.clamp(0, h as i64 - 1) as usize * w + x.clamp(0, w as i64 - 1) as usize];
    BinaryImage::from_fn(w, h, |x, y| {
        let i = y * w + x;
        let s = strength[i];
        if s < cutoff {
            return false;
        }
        let (dx, dy) = response.step[i];
        let (xi, yi) = (x as i64, y as i64);
        // a two-pixel plateau keeps only its far member
        s > at(xi + dx, yi + dy) && s >= at(xi - dx, yi - dy)
    })
    .expect("response has non-zero dimensions")
}

const CANNY_SIGMA: f64 = 1.4;

/// Classic Canny: Gaussian smoothing (σ = 1.4), Sobel gradients, non-maximum
/// suppression along the gradient and hysteresis from `high` through `low`.
pub fn canny_baseline(img: &GrayImage, low: f64, high: f64) -> Result<BinaryImage, RidgeError> {
    if !(low >= 0.0 && low <= high) {
        return Err(RidgeError::CannyThresholds { low, high });
    }
    let (w, h) = img.dimensions();
    let values: Vec<f64> = img.pixels().iter().map(|&p| f64::from(p)).collect();
    let smooth = gaussian_smooth(&values, w, h, CANNY_SIGMA)?;
    let at = |v: &[f64], x: i64, y: i64| v[y.clamp(0, h as i64 - 1) as usize * w + x.clamp(0, w as i64 - 1) as usize];

    let mut magnitude = vec![0.0; w * h];
    let mut step = vec![(0i64, 0i64); w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let p = |dx: i64, dy: i64| at(&smooth, x + dx, y + dy);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y as usize * w + x as usize;
            magnitude[i] = gx.hypot(gy);
            step[i] = step_of((gx, gy));
        }
    }

    let mut thin = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            let m = magnitude[i];
            if m <= FLAT {
                continue;
            }
            let (dx, dy) = step[i];
            let before = at(&magnitude, x - dx, y - dy);
            let after = at(&magnitude, x + dx, y + dy);
            // strict on one side so flat-topped ridges keep a single pixel
            if m > before && m >= after {
                thin[i] = m;
            }
        }
    }

    let mut edges = BinaryImage::empty(w, h).expect("image has non-zero dimensions");
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high && m > 0.0 {
            edges.set(i % w, i / w, true);
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                let j = ny * w + nx;
                if thin[j] >= low && thin[j] > 0.0 && !edges.get(nx, ny) {
                    edges.set(nx, ny, true);
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn second_differences(s: &[f64], w: usize, x: usize, y: usize) -> (f64, f64, f64) {
        let at = |x: usize, y: usize| s[y * w + x];
        let dxx = at(x + 1, y) - 2.0 * at(x, y) + at(x - 1, y);
        let dyy = at(x, y + 1) - 2.0 * at(x, y) + at(x, y - 1);
        let dxy = (at(x + 1, y + 1) - at(x + 1, y - 1) - at(x - 1, y + 1) + at(x - 1, y - 1)) / 4.0;
        (dxx, dxy, dyy)
    }

    fn assert_matches_differences(values: &[f64], w: usize, h: usize, sigma: f64, tol: f64) {
        let field = hessian_of_values(values, w, h, sigma).unwrap();
        let smooth = gaussian_smooth(values, w, h, sigma).unwrap();
        let margin = (3.0 * sigma).ceil() as usize + 1;
        for y in margin..h - margin {
            for x in margin..w - margin {
                let (dxx, dxy, dyy) = second_differences(&smooth, w, x, y);
                let (fxx, fxy, fyy) = field.at(x, y);
                assert!((fxx - dxx).abs() <= tol, "fxx at ({x},{y}): {fxx} vs {dxx}");
                assert!((fxy - dxy).abs() <= tol, "fxy at ({x},{y}): {fxy} vs {dxy}");
                assert!((fyy - dyy).abs() <= tol, "fyy at ({x},{y}): {fyy} vs {dyy}");
            }
        }
    }

    #[test]
    fn squared_ramp_has_constant_curvature() {
        let img = GrayImage::from_fn(16, 16, |x, _| (x * x) as u8).unwrap();
        let field = hessian_field(&img, 1.0).unwrap();
        for y in 4..12 {
            for x in 4..12 {
                let (fxx, fxy, fyy) = field.at(x, y);
                assert!((fxx - 2.0).abs() < 1e-9 && fxy.abs() < 1e-9 && fyy.abs() < 1e-9);
            }
        }
        let values: Vec<f64> = img.pixels().iter().map(|&p| f64::from(p)).collect();
        assert_matches_differences(&values, 16, 16, 1.0, 1e-6 * 255.0);
    }

    #[test]
    fn polynomial_images_match_finite_differences() {
        let (w, h) = (28, 24);
        let polys: [fn(f64, f64) -> f64; 4] = [
            |x, y| x * y,
            |_, y| y * y,
            |x, y| x * x * y / 24.0 - x * y * y / 30.0,
            |x, y| x * x * x / 90.0 + 0.5 * y * y - 3.0 * x + 7.0,
        ];
        for sigma in [0.8, 1.0, 1.7] {
            for p in polys {
                let values: Vec<f64> = (0..w * h).map(|i| p((i % w) as f64, (i / w) as f64)).collect();
                let range = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
                assert_matches_differences(&values, w, h, sigma, 1e-6 * range);
            }
        }
    }

    #[test]
    fn quarter_turn_swaps_second_derivatives() {
        let n = 21;
        let mut rng = SplitMix64::new(11);
        let img = GrayImage::from_fn(n, n, |_, _| rng.below(256) as u8).unwrap();
        // g(x, y) = f(y, n - 1 - x)
        let turned = GrayImage::from_fn(n, n, |x, y| img.get(y, n - 1 - x)).unwrap();
        let f = hessian_field(&img, 1.2).unwrap();
        let g = hessian_field(&turned, 1.2).unwrap();
        for y in 0..n {
            for x in 0..n {
                let (gxx, gxy, gyy) = g.at(x, y);
                let (fxx, fxy, fyy) = f.at(y, n - 1 - x);
                assert!((gxx - fyy).abs() < 1e-9);
                assert!((gyy - fxx).abs() < 1e-9);
                assert!((gxy + fxy).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_image_is_flat() {
        let img = GrayImage::filled(20, 15, 97).unwrap();
        let field = hessian_field(&img, 1.5).unwrap();
        assert!(field.fxx.iter().chain(&field.fxy).chain(&field.fyy).all(|&v| v == 0.0));
        assert_eq!(ridge_map(&img, &RidgeParams::default()).unwrap().edge_count(), 0);
        assert_eq!(canny_baseline(&img, 10.0, 30.0).unwrap().edge_count(), 0);
    }

    #[test]
    fn bad_parameters() {
        let img = GrayImage::filled(4, 4, 0).unwrap();
        assert_eq!(hessian_field(&img, 0.0), Err(RidgeError::Sigma(0.0)));
        assert_eq!(hessian_field(&img, -1.0), Err(RidgeError::Sigma(-1.0)));
        let params = RidgeParams {
            response_threshold: 0.0,
            ..RidgeParams::default()
        };
        assert_eq!(ridge_map(&img, &params), Err(RidgeError::Threshold(0.0)));
        assert!(matches!(
            canny_baseline(&img, 5.0, 1.0),
            Err(RidgeError::CannyThresholds { .. })
        ));
    }

    #[test]
    fn kernel_moments() {
        for sigma in [0.5, 1.0, 1.7, 3.0] {
            let k = GaussianKernels::new(sigma);
            let r = (k.smooth.len() / 2) as i64;
            let moment = |kern: &[f64], p: i32| -> f64 {
                kern.iter().enumerate().map(|(j, v)| ((j as i64 - r) as f64).powi(p) * v).sum()
            };
            assert!((moment(&k.smooth, 0) - 1.0).abs() < 1e-14);
            assert!((moment(&k.first, 1) + 1.0).abs() < 1e-14);
            assert!(moment(&k.second, 0).abs() < 1e-14);
            assert!((moment(&k.second, 2) - 2.0).abs() < 1e-13);
            assert_eq!((k.smooth.len() / 2), (3.0 * sigma).ceil() as usize);
        }
    }

    #[test]
    fn eigenvalue_examples() {
        assert_eq!(eigenvalues(2.0, 0.0, 2.0), (2.0, 2.0));
        assert_eq!(eigenvalues(0.0, 1.0, 0.0), (-1.0, 1.0));
        assert_eq!(eigenvalues(1.0, 0.0, 3.0), (1.0, 3.0));
        assert_eq!(eigenvalues(-5.0, 0.0, 1.0), (1.0, -5.0));
    }

    #[test]
    fn single_bright_row_is_recovered() {
        let img = GrayImage::from_fn(64, 64, |_, y| if y == 20 { 255 } else { 0 }).unwrap();
        let params = RidgeParams {
            sigma: 1.0,
            response_threshold: 0.3,
            polarity: Polarity::BrightLine,
        };
        let map = ridge_map(&img, &params).unwrap();
        let hits = (3..=60).filter(|&x| map.get(x, 20)).count();
        assert!(hits as f64 >= 0.9 * 58.0, "recall {hits}/58");
        let off = map.edge_points().filter(|&(_, y)| y != 20).count();
        assert!(off as f64 <= 0.01 * (64.0 * 63.0), "{off} off-row marks");
    }

    #[test]
    fn parallel_lines_stay_separate() {
        let img = GrayImage::from_fn(64, 64, |_, y| if y == 20 || y == 32 { 255 } else { 0 }).unwrap();
        let map = ridge_map(&img, &RidgeParams::default()).unwrap();
        for x in 0..64 {
            assert!(map.get(x, 20) && map.get(x, 32), "column {x}");
            for y in 21..32 {
                assert!(!map.get(x, y), "bridge at ({x}, {y})");
            }
        }
    }

    #[test]
    fn dark_lines_need_dark_polarity() {
        let img = GrayImage::from_fn(40, 40, |x, _| if x == 10 { 0 } else { 200 }).unwrap();
        let bright = ridge_map(&img, &RidgeParams::default()).unwrap();
        assert!(!(0..40).any(|y| bright.get(10, y)));
        let params = RidgeParams {
            polarity: Polarity::DarkLine,
            ..RidgeParams::default()
        };
        let dark = ridge_map(&img, &params).unwrap();
        assert!((0..40).all(|y| dark.get(10, y)));
        let both = ridge_map(&img, &RidgeParams { polarity: Polarity::Both, ..params }).unwrap();
        assert!((0..40).all(|y| both.get(10, y)));
    }

    #[test]
    fn canny_marks_one_column_on_a_step() {
        let img = GrayImage::from_fn(64, 32, |x, _| if x < 32 { 0 } else { 255 }).unwrap();
        let edges = canny_baseline(&img, 20.0, 60.0).unwrap();
        let columns: std::collections::BTreeSet<usize> = edges.edge_points().map(|(x, _)| x).collect();
        assert_eq!(columns.len(), 1, "{columns:?}");
        let col = *columns.iter().next().unwrap();
        assert!(col == 31 || col == 32);
        assert!((0..32).all(|y| edges.get(col, y)));
    }

    #[test]
    fn canny_is_noisier_than_ridges_on_cluttered_scenes() {
        for seed in 0..4u64 {
            let mut rng = SplitMix64::new(seed);
            let img = GrayImage::from_fn(96, 96, |_, y| {
                let base = if y == 40 { 230.0 } else { 60.0 };
                (base + rng.range_f64(-50.0, 50.0)).clamp(0.0, 255.0) as u8
            })
            .unwrap();
            let canny = canny_baseline(&img, 10.0, 30.0).unwrap();
            let ridges = ridge_map(&img, &RidgeParams::default()).unwrap();
            let near = |m: &BinaryImage| m.edge_points().filter(|&(_, y)| (38..=42).contains(&y)).count();
            let background = |m: &BinaryImage| m.edge_points().filter(|&(_, y)| !(36..=44).contains(&y)).count();
            assert!(near(&canny) > 0 && near(&ridges) > 0);
            assert!(
                background(&canny) > background(&ridges),
                "seed {seed}: canny {} vs ridge {}",
                background(&canny),
                background(&ridges)
            );
        }
    }

    proptest! {
        #[test]
        fn eigen_identities(a in -1e3f64..1e3, b in -1e3f64..1e3, c in -1e3f64..1e3) {
            let (l1, l2) = eigenvalues(a, b, c);
            prop_assert!(l1.abs() <= l2.abs());
            let scale = a.abs() + b.abs() + c.abs() + 1e-300;
            prop_assert!(((l1 + l2) - (a + c)).abs() <= 1e-9 * scale);
            prop_assert!((l1 * l2 - (a * c - b * b)).abs() <= 1e-9 * scale * scale);
        }

        #[test]
        fn offset_invariance(seed: u64, offset in 1u8..60) {
            let mut rng = SplitMix64::new(seed);
            let img = GrayImage::from_fn(24, 20, |_, _| rng.below(190) as u8).unwrap();
            let shifted = GrayImage::from_fn(24, 20, |x, y| img.get(x, y) + offset).unwrap();
            let params = RidgeParams { polarity: Polarity::Both, ..RidgeParams::default() };
            prop_assert_eq!(ridge_map(&img, &params).unwrap(), ridge_map(&shifted, &params).unwrap());
        }

        #[test]
        fn marked_pixels_pass_the_threshold(seed: u64, threshold in 0.05f64..1.0) {
            let mut rng = SplitMix64::new(seed);
            let img = GrayImage::from_fn(20, 18, |_, _| rng.below(256) as u8).unwrap();
            let params = RidgeParams { response_threshold: threshold, ..RidgeParams::default() };
            let response = ridge_response(&img, params.sigma).unwrap();
            let map = ridge_map_from_response(&response, &params);
            let peak = response.dominant.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(map.edge_count() <= 20 * 18);
            for (x, y) in map.edge_points() {
                let l2 = response.dominant[y * 20 + x];
                prop_assert!(l2 < 0.0 && l2.abs() >= threshold * peak);
            }
        }
    }
}

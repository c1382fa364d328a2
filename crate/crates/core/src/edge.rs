//! Canny edge detection on metric depth images.
//!
//! Gradients are Sobel responses divided by 8, so magnitudes are in meters
//! per pixel and thresholds carry the same unit.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::DepthImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CannyParams {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self { sigma: 1.4, low: 0.05, high: 0.15 }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::OutOfRange { what: "canny sigma", value: self.sigma });
        }
        if !(self.low > 0.0 && self.low < self.high) {
            return Err(Error::InvalidValue(format!("canny thresholds must satisfy 0 < low < high (got {}, {})", self.low, self.high)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl EdgeMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![true; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!("mask of {} for {width}x{height}", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![false; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                data[x * self.height + y] = self.get(x, y);
            }
        }
        Self { width: self.height, height: self.width, data }
    }
}

/// Normalized sampled Gaussian with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Replaces invalid pixels by the mean of their already-filled 4-neighbors,
/// growing outward from the valid set one ring at a time.
fn fill_invalid(img: &DepthImage) -> Vec<f64> {
    let (w, h) = img.dims();
    let mut vals: Vec<f64> = img.data().iter().map(|&d| f64::from(d)).collect();
    let mut filled: Vec<bool> = img.data().iter().map(|&d| d > 0.0).collect();
    if !filled.iter().any(|f| *f) {
        return vals;
    }
    let neighbors = |i: usize| {
        let (x, y) = (i % w, i / w);
        let mut n = [usize::MAX; 4];
        if x > 0 {
            n[0] = i - 1;
        }
        if x + 1 < w {
            n[1] = i + 1;
        }
        if y > 0 {
            n[2] = i - w;
        }
        if y + 1 < h {
            n[3] = i + w;
        }
        n
    };
    let mut frontier: Vec<usize> =
        (0..w * h).filter(|&i| !filled[i] && neighbors(i).iter().any(|&j| j != usize::MAX && filled[j])).collect();
    while !frontier.is_empty() {
        let ring: Vec<(usize, f64)> = frontier
            .iter()
            .map(|&i| {
                let (mut sum, mut n) = (0.0, 0.0);
                for j in neighbors(i) {
                    if j != usize::MAX && filled[j] {
                        sum += vals[j];
                        n += 1.0;
                    }
                }
                (i, sum / n)
            })
            .collect();
        for &(i, v) in &ring {
            vals[i] = v;
            filled[i] = true;
        }
        let mut next: Vec<usize> = ring.iter().flat_map(|&(i, _)| neighbors(i)).filter(|&j| j != usize::MAX && !filled[j]).collect();
        next.sort_unstable();
        next.dedup();
        frontier = next;
    }
    vals
}

fn convolve_rows(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as i64;
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in k.iter().enumerate() {
                let sx = (x as i64 + ki as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += kv * row[sx];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn convolve_cols(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as i64;
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in k.iter().enumerate() {
                let sy = (y as i64 + ki as i64 - r).clamp(0, h as i64 - 1) as usize;
                acc += kv * src[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Blur of the hole-filled image. Both pass orders are averaged so the
/// result commutes exactly with transposition.
fn blur_filled(img: &DepthImage, sigma: f64) -> Vec<f64> {
    let (w, h) = img.dims();
    let k = gaussian_kernel(sigma);
    let filled = fill_invalid(img);
    let hv = convolve_cols(&convolve_rows(&filled, w, h, &k), w, h, &k);
    let vh = convolve_rows(&convolve_cols(&filled, w, h, &k), w, h, &k);
    hv.iter().zip(&vh).map(|(a, b)| 0.5 * (a + b)).collect()
}

/// Separable Gaussian blur with clamped borders. Invalid pixels take the
/// value of their nearest valid neighbors while blurring and are reset to
/// `0` afterwards.
pub fn gaussian_blur(img: &DepthImage, sigma: f64) -> Result<DepthImage> {
    if !(sigma > 0.0) {
        return Err(Error::OutOfRange { what: "sigma", value: sigma });
    }
    let (w, h) = img.dims();
    let blurred = blur_filled(img, sigma);
    let data = blurred.iter().zip(img.data()).map(|(&b, &orig)| if orig > 0.0 { b.max(0.0) as f32 } else { 0.0 }).collect();
    Ok(DepthImage::from_parts(w, h, data))
}

/// Gradient magnitude and components (meters per pixel); zero on the
/// one-pixel image border.
fn sobel(p: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    if w < 3 || h < 3 {
        return (mag, gx, gy);
    }
    let at = |x: usize, y: usize| p[y * w + x];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let a = at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1);
            let b = at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1);
            let c = at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1);
            let d = at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1);
            let (dx, dy) = ((a - b) / 8.0, (c - d) / 8.0);
            let i = y * w + x;
            gx[i] = dx;
            gy[i] = dy;
            mag[i] = (dx * dx + dy * dy).sqrt();
        }
    }
    (mag, gx, gy)
}

const TAN_22_5: f64 = 0.414_213_562_373_095_1;

/// Thin ridges to one pixel. Ties along axis-aligned and main-diagonal
/// directions go to the pixel on the negative side, so a symmetric step
/// yields a single edge pixel per row.
fn non_maximum_suppression(mag: &[f64], gx: &[f64], gy: &[f64], w: usize, h: usize, low: f64) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    if w < 3 || h < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if m < low {
                continue;
            }
            let (ax, ay) = (gx[i].abs(), gy[i].abs());
            let keep = if ay <= TAN_22_5 * ax {
                m > mag[i - 1] && m >= mag[i + 1]
            } else if ax <= TAN_22_5 * ay {
                m > mag[i - w] && m >= mag[i + w]
            } else if gx[i] * gy[i] > 0.0 {
                m > mag[i - w - 1] && m >= mag[i + w + 1]
            } else {
                m >= mag[i - w + 1] && m >= mag[i + w - 1]
            };
            if keep {
                out[i] = m;
            }
        }
    }
    out
}

fn hysteresis(thin: &[f64], valid: &[bool], w: usize, h: usize, low: f64, high: f64) -> Vec<bool> {
    let mut out = vec![false; w * h];
    let mut queue = VecDeque::new();
    for i in 0..w * h {
        if thin[i] >= high && valid[i] && !out[i] {
            out[i] = true;
            queue.push_back(i);
            while let Some(j) = queue.pop_front() {
                let (x, y) = ((j % w) as i64, (j / w) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let k = ny as usize * w + nx as usize;
                        if !out[k] && thin[k] >= low {
                            out[k] = true;
                            queue.push_back(k);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradient magnitude of the blurred image, exposed for diagnostics and tests.
pub fn gradient_magnitude(img: &DepthImage, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::OutOfRange { what: "sigma", value: sigma });
    }
    let (w, h) = img.dims();
    Ok(sobel(&blur_filled(img, sigma), w, h).0)
}

/// Blur, Sobel gradient, non-maximum suppression over four direction bins
/// and 8-connected hysteresis. Invalid pixels never seed strong edges.
pub fn canny(img: &DepthImage, params: &CannyParams) -> Result<EdgeMask> {
    params.validate()?;
    let (w, h) = img.dims();
    let blurred = blur_filled(img, params.sigma);
    let (mag, gx, gy) = sobel(&blurred, w, h);
    let thin = non_maximum_suppression(&mag, &gx, &gy, w, h, params.low);
    let valid: Vec<bool> = img.data().iter().map(|&d| d > 0.0).collect();
    let data = hysteresis(&thin, &valid, w, h, params.low, params.high);
    Ok(EdgeMask { width: w, height: h, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn step_image(w: usize, h: usize, c: usize) -> DepthImage {
        let data = (0..w * h).map(|i| if i % w < c { 1.0 } else { 2.0 }).collect();
        DepthImage::new(w, h, data).unwrap()
    }

    #[test]
    fn kernel_is_normalized() {
        for sigma in [0.3, 0.8, 1.0, 1.4, 2.5, 4.0] {
            let k = gaussian_kernel(sigma);
            assert_eq!(k.len(), 2 * (3.0 * sigma).ceil() as usize + 1);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_constant_is_constant() {
        let img = DepthImage::filled(9, 7, 2.5).unwrap();
        let out = gaussian_blur(&img, 1.4).unwrap();
        assert!(out.data().iter().all(|v| (v - 2.5).abs() < 1e-6));
    }

    #[test]
    fn blur_impulse_center_weight() {
        // Hand-evaluated: 1-D kernel at sigma=1 over -3..=3 sums to
        // 1 + 2(e^-0.5 + e^-2 + e^-4.5) = 2.505949, center 0.399050,
        // 2-D center 0.159241.
        let mut data = vec![1.0; 15 * 15];
        data[7 * 15 + 7] = 2.0;
        let img = DepthImage::new(15, 15, data).unwrap();
        let out = gaussian_blur(&img, 1.0).unwrap();
        let center = out.get(7, 7) - 1.0;
        assert!((center - 0.159241).abs() < 1e-5, "{center}");
    }

    #[test]
    fn blur_restores_invalid_pixels() {
        let mut data = vec![3.0; 25];
        data[12] = 0.0;
        let img = DepthImage::new(5, 5, data).unwrap();
        let out = gaussian_blur(&img, 1.0).unwrap();
        assert_eq!(out.get(2, 2), 0.0);
        // the hole is filled with 3.0 during blurring, so neighbors are unchanged
        assert!((out.get(1, 2) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn blur_rejects_nonpositive_sigma() {
        let img = DepthImage::filled(3, 3, 1.0).unwrap();
        assert!(gaussian_blur(&img, 0.0).is_err());
    }

    #[test]
    fn flat_image_has_no_edges() {
        let img = DepthImage::filled(32, 24, 1.7).unwrap();
        assert_eq!(canny(&img, &CannyParams::default()).unwrap().count(), 0);
    }

    #[test]
    fn vertical_step_one_pixel_per_row() {
        let (w, h, c) = (40, 30, 20);
        let params = CannyParams { sigma: 1.4, low: 0.05, high: 0.2 };
        let mask = canny(&step_image(w, h, c), &params).unwrap();
        for y in 0..h {
            let cols: Vec<usize> = (0..w).filter(|&x| mask.get(x, y)).collect();
            if y == 0 || y == h - 1 {
                assert!(cols.is_empty());
                continue;
            }
            assert_eq!(cols.len(), 1, "row {y}: {cols:?}");
            assert!(cols[0] + 1 >= c && cols[0] <= c + 1);
        }
    }

    #[test]
    fn thresholds_validated() {
        let img = DepthImage::filled(8, 8, 1.0).unwrap();
        let bad = CannyParams { sigma: 1.0, low: 0.2, high: 0.1 };
        assert!(canny(&img, &bad).is_err());
    }

    #[test]
    fn invalid_pixels_do_not_seed() {
        // a lone valid-vs-invalid boundary: the filled image is flat, no edges
        let mut data = vec![2.0; 20 * 20];
        for y in 0..20 {
            for x in 0..10 {
                data[y * 20 + x] = 0.0;
            }
        }
        let img = DepthImage::new(20, 20, data).unwrap();
        assert_eq!(canny(&img, &CannyParams::default()).unwrap().count(), 0);
    }

    #[test]
    fn transpose_symmetry_on_random_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = CannyParams { sigma: 1.0, low: 0.05, high: 0.15 };
        for _ in 0..50 {
            let data: Vec<f32> = (0..256).map(|_| rng.random_range(0.5f32..3.0)).collect();
            let img = DepthImage::new(16, 16, data).unwrap();
            let a = canny(&img, &params).unwrap();
            let b = canny(&img.transpose(), &params).unwrap().transpose();
            assert_eq!(a, b);
        }
    }

    proptest! {
        #[test]
        fn small_range_means_no_edges(
            vals in proptest::collection::vec(1.0f32..1.049, 12 * 10)
        ) {
            let img = DepthImage::new(12, 10, vals).unwrap();
            let params = CannyParams::default();
            prop_assert_eq!(canny(&img, &params).unwrap().count(), 0);
        }

        #[test]
        fn every_edge_connects_to_a_strong_pixel(
            vals in proptest::collection::vec(0.5f32..2.5, 14 * 14)
        ) {
            let img = DepthImage::new(14, 14, vals).unwrap();
            let params = CannyParams { sigma: 0.8, low: 0.03, high: 0.12 };
            let mask = canny(&img, &params).unwrap();
            let mag = gradient_magnitude(&img, params.sigma).unwrap();
            // flood from strong mask pixels through the mask must cover the whole mask
            let (w, h) = (14usize, 14usize);
            let mut seen = vec![false; w * h];
            let mut stack: Vec<usize> = (0..w * h)
                .filter(|&i| mask.data()[i] && mag[i] >= params.high)
                .collect();
            for &i in &stack { seen[i] = true; }
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % w) as i64, (i / w) as i64);
                for dy in -1..=1i64 { for dx in -1..=1i64 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 { continue; }
                    let k = ny as usize * w + nx as usize;
                    if mask.data()[k] && !seen[k] { seen[k] = true; stack.push(k); }
                }}
            }
            for i in 0..w * h {
                prop_assert_eq!(mask.data()[i], seen[i]);
            }
        }
    }
}

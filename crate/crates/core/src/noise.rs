//! Depth-sensor noise model: Gaussian noise on object edges, random dropout
//! concentrated on the image border, and salt-and-pepper noise.
//!
//! All stages draw from [`RngStream`] substreams, so the output for a given
//! seed does not depend on which worker processes the image.

use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::edge::{canny, CannyParams, EdgeMask};
use crate::error::{Error, Result};
use crate::image::{DepthImage, MAX_SENSOR_DEPTH};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub xi_min: f64,
    pub xi_max: f64,
    /// Horizontal spread divisor: border columns follow `N(0, w / alpha)`.
    pub alpha: f64,
    /// Vertical spread divisor: border rows follow `N(0, h / beta)`.
    pub beta: f64,
    pub mask_ratio_max: f64,
    pub sp_density: f64,
    /// Depth written for "salt" pixels.
    pub salt_depth: f32,
    pub canny: CannyParams,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            xi_min: 1.0,
            xi_max: 1.2,
            alpha: 36.0,
            beta: 24.0,
            mask_ratio_max: 0.30,
            sp_density: 0.005,
            salt_depth: MAX_SENSOR_DEPTH,
            canny: CannyParams::default(),
        }
    }
}

impl NoiseParams {
    /// Parameters under which every stage is the identity.
    pub fn identity() -> Self {
        Self { xi_min: 1.0, xi_max: 1.0, mask_ratio_max: 0.0, sp_density: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1.0 <= self.xi_min && self.xi_min <= self.xi_max && self.xi_max.is_finite()) {
            return Err(Error::InvalidValue(format!("xi range must satisfy 1 <= xi_min <= xi_max (got {}, {})", self.xi_min, self.xi_max)));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::OutOfRange { what: "alpha", value: self.alpha });
        }
        if !(self.beta > 0.0) {
            return Err(Error::OutOfRange { what: "beta", value: self.beta });
        }
        if !(0.0..=1.0).contains(&self.mask_ratio_max) {
            return Err(Error::OutOfRange { what: "mask_ratio_max", value: self.mask_ratio_max });
        }
        if !(0.0..1.0).contains(&self.sp_density) {
            return Err(Error::OutOfRange { what: "sp_density", value: self.sp_density });
        }
        if !(self.salt_depth >= 0.0 && self.salt_depth.is_finite()) {
            return Err(Error::OutOfRange { what: "salt_depth", value: f64::from(self.salt_depth) });
        }
        self.canny.validate()
    }
}

/// Edge noise standard deviation (meters) at true depth `z` (meters).
pub fn sigma<T: Float>(z: T, xi: T) -> T {
    let c = |v: f64| T::from(v).expect("constant representable");
    let dz = z - c(0.4);
    (c(0.0012) + c(0.0019) * dz * dz) * xi
}

fn draw_xi(params: &NoiseParams, rng: &RngStream) -> f64 {
    let u: f64 = rng.rng().random();
    params.xi_min + (params.xi_max - params.xi_min) * u
}

/// Replaces every valid edge pixel by a draw from `N(z, sigma(z, xi))`,
/// clamped at zero. One `xi` is drawn per image.
pub fn edge_noise(img: &DepthImage, mask: &EdgeMask, params: &NoiseParams, rng: &RngStream) -> Result<DepthImage> {
    if mask.dims() != img.dims() {
        return Err(Error::DimensionMismatch { expected: img.dims(), actual: mask.dims() });
    }
    let xi = draw_xi(params, &rng.named("xi"));
    let mut draws = rng.named("gauss").rng();
    let data = img
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&z, &edge)| {
            if !edge || z <= 0.0 {
                return z;
            }
            let z64 = f64::from(z);
            let n: f64 = draws.sample(StandardNormal);
            ((z64 + sigma(z64, xi) * n).max(0.0)) as f32
        })
        .collect();
    Ok(DepthImage::from_parts(img.width(), img.height(), data))
}

fn truncated_normal<R: Rng>(rng: &mut R, std: f64, bound: f64) -> f64 {
    loop {
        let x: f64 = rng.sample::<f64, _>(StandardNormal) * std;
        if x.abs() <= bound {
            return x;
        }
    }
}

/// Number of loop iterations of the border mask for ratio `r`.
pub fn border_mask_steps(width: usize, height: usize, r: f64) -> usize {
    (r * width as f64 * height as f64 / 2.0).floor() as usize
}

/// Pixel pairs targeted by the border mask, in draw order. Each step yields
/// one pixel near the left/right border (truncated normal column, uniform
/// row) and one near the top/bottom border (uniform column, truncated
/// normal row); negative offsets wrap to the opposite side.
pub fn border_mask_targets(width: usize, height: usize, r: f64, params: &NoiseParams, rng: &RngStream) -> Vec<(usize, usize)> {
    let (w, h) = (width as f64, height as f64);
    let (sx, sy) = (w / params.alpha, h / params.beta);
    let steps = border_mask_steps(width, height, r);
    let mut g = rng.rng();
    let to_index = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
    let mut out = Vec::with_capacity(2 * steps);
    for _ in 0..steps {
        let mut x1 = truncated_normal(&mut g, sx, w / 2.0);
        let y1: f64 = g.random::<f64>() * h;
        let x2: f64 = g.random::<f64>() * w;
        let mut y2 = truncated_normal(&mut g, sy, h / 2.0);
        if x1 < 0.0 {
            x1 += w;
        }
        if y2 < 0.0 {
            y2 += h;
        }
        out.push((to_index(x1, width), to_index(y1, height)));
        out.push((to_index(x2, width), to_index(y2, height)));
    }
    out
}

/// Zeroes randomly chosen pixels concentrated along the image border.
pub fn border_mask(img: &DepthImage, r: f64, params: &NoiseParams, rng: &RngStream) -> Result<DepthImage> {
    if !(0.0..=params.mask_ratio_max).contains(&r) {
        return Err(Error::OutOfRange { what: "mask ratio", value: r });
    }
    let (w, h) = img.dims();
    let mut data = img.data().to_vec();
    for (x, y) in border_mask_targets(w, h, r, params, rng) {
        data[y * w + x] = 0.0;
    }
    Ok(DepthImage::from_parts(w, h, data))
}

/// Each pixel independently becomes salt (`salt_depth`) or pepper (`0`)
/// with probability `density`, with equal odds.
pub fn salt_pepper(img: &DepthImage, density: f64, salt_depth: f32, rng: &RngStream) -> Result<DepthImage> {
    if !(0.0..1.0).contains(&density) {
        return Err(Error::OutOfRange { what: "salt-and-pepper density", value: density });
    }
    if density == 0.0 {
        return Ok(img.clone());
    }
    let mut g = rng.rng();
    let data = img
        .data()
        .iter()
        .map(|&z| {
            let u: f64 = g.random();
            if u < density {
                if g.random::<bool>() {
                    salt_depth
                } else {
                    0.0
                }
            } else {
                z
            }
        })
        .collect();
    Ok(DepthImage::from_parts(img.width(), img.height(), data))
}

/// Full pipeline: Canny edges, edge noise, border mask with
/// `r ~ U(0, mask_ratio_max)`, then salt-and-pepper.
pub fn augment(img: &DepthImage, params: &NoiseParams, rng: &RngStream) -> Result<DepthImage> {
    params.validate()?;
    let edges = canny(img, &params.canny)?;
    let noisy = edge_noise(img, &edges, params, &rng.named("edge"))?;
    let r = params.mask_ratio_max * rng.named("ratio").rng().random::<f64>();
    let masked = border_mask(&noisy, r, params, &rng.named("border"))?;
    salt_pepper(&masked, params.sp_density, params.salt_depth, &rng.named("salt_pepper"))
}

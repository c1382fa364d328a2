//! Image and observation value types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest depth the simulated sensor reports, in meters.
pub const MAX_SENSOR_DEPTH: f32 = 8.0;

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions { width, height });
    }
    Ok(())
}

/// Source index for nearest-neighbor sampling: the source pixel whose
/// footprint contains the destination pixel center.
#[inline]
pub(crate) fn nearest_index(dst: usize, dst_len: usize, src_len: usize) -> usize {
    (((2 * dst + 1) * src_len) / (2 * dst_len)).min(src_len - 1)
}

fn resize_planar<T: Copy>(data: &[T], (w, h): (usize, usize), channels: usize, (nw, nh): (usize, usize)) -> Vec<T> {
    let xs: Vec<usize> = (0..nw).map(|x| nearest_index(x, nw, w)).collect();
    let mut out = Vec::with_capacity(nw * nh * channels);
    for y in 0..nh {
        let sy = nearest_index(y, nh, h);
        for &sx in &xs {
            let base = (sy * w + sx) * channels;
            out.extend_from_slice(&data[base..base + channels]);
        }
    }
    out
}

/// Metric depth image. `0.0` marks "no return / masked".
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::Shape(format!("depth buffer has {} values for {width}x{height}", data.len())));
        }
        if let Some(bad) = data.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::OutOfRange { what: "depth", value: f64::from(*bad) });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, depth: f32) -> Result<Self> {
        Self::new(width, height, vec![depth; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.get(x, y) > 0.0
    }

    /// Crate-internal constructor for buffers already known to satisfy the
    /// invariants (finite, non-negative).
    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|d| d.is_finite() && *d >= 0.0));
        Self { width, height, data }
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                data[x * self.height + y] = self.get(x, y);
            }
        }
        Self::from_parts(self.height, self.width, data)
    }

    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        let data = resize_planar(&self.data, self.dims(), 1, (width, height));
        Ok(Self::from_parts(width, height, data))
    }

    /// Maps valid depth to `round(255 * min(d, max) / max)` with halves rounded up.
    pub fn to_gray(&self, max_depth: f32) -> Result<GrayImage> {
        if !(max_depth > 0.0) || !max_depth.is_finite() {
            return Err(Error::OutOfRange { what: "max_depth", value: f64::from(max_depth) });
        }
        let max = f64::from(max_depth);
        let data =
            self.data.iter().map(|&d| if d <= 0.0 { 0 } else { (255.0 * f64::from(d).min(max) / max + 0.5).floor() as u8 }).collect();
        Ok(GrayImage::from_parts(self.width, self.height, data))
    }
}

/// 8-bit single channel image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::Shape(format!("gray buffer has {} values for {width}x{height}", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<u8>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        let data = resize_planar(&self.data, self.dims(), 1, (width, height));
        Ok(Self::from_parts(width, height, data))
    }
}

/// 8-bit interleaved RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!("rgb buffer has {} bytes for {width}x{height}", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        let data = resize_planar(&self.data, self.dims(), 3, (width, height));
        Ok(Self { width, height, data })
    }
}

/// Collision-risk level, 1 (lowest) to 6 (pedestrians).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RiskCategory(u8);

impl RiskCategory {
    pub const LOWEST: RiskCategory = RiskCategory(1);
    pub const PEDESTRIAN: RiskCategory = RiskCategory(6);

    pub fn new(level: u8) -> Result<Self> {
        if (1..=6).contains(&level) {
            Ok(Self(level))
        } else {
            Err(Error::OutOfRange { what: "risk level", value: f64::from(level) })
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = RiskCategory> {
        (1..=6).map(RiskCategory)
    }
}

impl TryFrom<u8> for RiskCategory {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RiskCategory> for u8 {
    fn from(c: RiskCategory) -> u8 {
        c.0
    }
}

/// Pixel box; `x_min`/`y_min` inclusive, `x_max`/`y_max` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.x_max.saturating_sub(self.x_min)) * u64::from(self.y_max.saturating_sub(self.y_min))
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let ok = self.x_min < self.x_max && self.y_min < self.y_max && self.x_max as usize <= width && self.y_max as usize <= height;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidValue(format!("bbox {self:?} outside {width}x{height} image")))
        }
    }

    /// Rescales the box to another image resolution, keeping it non-empty.
    pub fn scaled(&self, from: (usize, usize), to: (usize, usize)) -> Self {
        let sx = |v: u32| ((u64::from(v) * to.0 as u64) / from.0 as u64) as u32;
        let sy = |v: u32| ((u64::from(v) * to.1 as u64) / from.1 as u64) as u32;
        let x_min = sx(self.x_min).min(to.0 as u32 - 1);
        let y_min = sy(self.y_min).min(to.1 as u32 - 1);
        let x_max = sx(self.x_max).max(x_min + 1);
        let y_max = sy(self.y_max).max(y_min + 1);
        Self::new(x_min, y_min, x_max, y_max)
    }
}

impl From<[u32; 4]> for BBox {
    fn from(v: [u32; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "class")]
    pub class_name: String,
    #[serde(rename = "level")]
    pub category: RiskCategory,
    pub bbox: BBox,
}

/// The eight compared observation formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReprKind {
    Rgb,
    RgbNoise,
    Depth,
    DepthNoise,
    SegFc,
    SegPsp,
    DepthDet,
    DepthNoiseDet,
}

impl ReprKind {
    pub const ALL: [ReprKind; 8] = [
        ReprKind::Rgb,
        ReprKind::RgbNoise,
        ReprKind::Depth,
        ReprKind::DepthNoise,
        ReprKind::SegFc,
        ReprKind::SegPsp,
        ReprKind::DepthDet,
        ReprKind::DepthNoiseDet,
    ];

    pub fn has_semantic(self) -> bool {
        matches!(self, ReprKind::DepthDet | ReprKind::DepthNoiseDet)
    }

    pub fn is_noisy(self) -> bool {
        matches!(self, ReprKind::RgbNoise | ReprKind::DepthNoise | ReprKind::DepthNoiseDet)
    }

    pub fn is_depth(self) -> bool {
        matches!(self, ReprKind::Depth | ReprKind::DepthNoise | ReprKind::DepthDet | ReprKind::DepthNoiseDet)
    }

    /// Channels of the primary image.
    pub fn primary_channels(self) -> usize {
        match self {
            ReprKind::Rgb | ReprKind::RgbNoise => 3,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReprKind::Rgb => "Rgb",
            ReprKind::RgbNoise => "RgbNoise",
            ReprKind::Depth => "Depth",
            ReprKind::DepthNoise => "DepthNoise",
            ReprKind::SegFc => "SegFc",
            ReprKind::SegPsp => "SegPsp",
            ReprKind::DepthDet => "DepthDet",
            ReprKind::DepthNoiseDet => "DepthNoiseDet",
        }
    }
}

impl fmt::Display for ReprKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReprKind {
    type Err = Error;

    /// Case-insensitive; underscores and dashes are ignored (`depth_noise_det`).
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '_' && *c != '-').map(|c| c.to_ascii_lowercase()).collect();
        ReprKind::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::Unknown { kind: "representation kind", name: s.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrimaryImage {
    Depth(DepthImage),
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl PrimaryImage {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            PrimaryImage::Depth(i) => i.dims(),
            PrimaryImage::Gray(i) => i.dims(),
            PrimaryImage::Rgb(i) => i.dims(),
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            PrimaryImage::Rgb(_) => 3,
            _ => 1,
        }
    }

    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<Self> {
        Ok(match self {
            PrimaryImage::Depth(i) => PrimaryImage::Depth(i.resize_nearest(width, height)?),
            PrimaryImage::Gray(i) => PrimaryImage::Gray(i.resize_nearest(width, height)?),
            PrimaryImage::Rgb(i) => PrimaryImage::Rgb(i.resize_nearest(width, height)?),
        })
    }

    /// Planar channel-major values scaled to `[0, 1]`: depth / 8 m clamped, 8-bit / 255.
    pub fn normalized(&self) -> Vec<f32> {
        match self {
            PrimaryImage::Depth(i) => i.data().iter().map(|d| (d / MAX_SENSOR_DEPTH).clamp(0.0, 1.0)).collect(),
            PrimaryImage::Gray(i) => i.data().iter().map(|v| f32::from(*v) / 255.0).collect(),
            PrimaryImage::Rgb(i) => {
                let n = i.width() * i.height();
                let mut out = vec![0.0; 3 * n];
                for (p, px) in i.data().chunks_exact(3).enumerate() {
                    for c in 0..3 {
                        out[c * n + p] = f32::from(px[c]) / 255.0;
                    }
                }
                out
            }
        }
    }
}

/// One network observation: a primary image plus the categorized detection
/// image for the two-image kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprBundle {
    kind: ReprKind,
    primary: PrimaryImage,
    semantic: Option<GrayImage>,
}

impl ReprBundle {
    pub fn new(kind: ReprKind, primary: PrimaryImage, semantic: Option<GrayImage>) -> Result<Self> {
        let primary_ok = match kind {
            ReprKind::Rgb | ReprKind::RgbNoise => matches!(primary, PrimaryImage::Rgb(_)),
            ReprKind::SegFc | ReprKind::SegPsp => matches!(primary, PrimaryImage::Gray(_)),
            _ => matches!(primary, PrimaryImage::Depth(_)),
        };
        if !primary_ok {
            return Err(Error::InvalidValue(format!("primary image type does not match kind {kind}")));
        }
        if kind.has_semantic() != semantic.is_some() {
            return Err(Error::InvalidValue(format!(
                "kind {kind} {} a semantic image",
                if kind.has_semantic() { "requires" } else { "forbids" }
            )));
        }
        if let Some(sem) = &semantic {
            if sem.dims() != primary.dims() {
                return Err(Error::DimensionMismatch { expected: primary.dims(), actual: sem.dims() });
            }
        }
        Ok(Self { kind, primary, semantic })
    }

    pub fn kind(&self) -> ReprKind {
        self.kind
    }

    pub fn primary(&self) -> &PrimaryImage {
        &self.primary
    }

    pub fn semantic(&self) -> Option<&GrayImage> {
        self.semantic.as_ref()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.primary.dims()
    }

    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<Self> {
        let primary = self.primary.resize_nearest(width, height)?;
        let semantic = self.semantic.as_ref().map(|s| s.resize_nearest(width, height)).transpose()?;
        Ok(Self { kind: self.kind, primary, semantic })
    }
}

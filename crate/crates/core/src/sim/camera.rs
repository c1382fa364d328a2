//! Pinhole depth camera over the extruded 2-D world.
//!
//! Depth is planar: the distance along the optical axis, not the ray length.
//! Rays are built with a unit forward component so the 2-D ray parameter is
//! the depth itself.

use serde::{Deserialize, Serialize};

use super::geometry::{ray_segment, Vec2};
use super::robot::Pose;
use super::scene::Scene;
use crate::error::{Error, Result};
use crate::image::{BBox, DepthImage, Detection, GrayImage, RgbImage, MAX_SENSOR_DEPTH};
use crate::semantic::CategoryMap;

/// Objects with fewer visible pixels are not reported as detections.
pub const MIN_DETECTION_PIXELS: usize = 50;

/// Class vocabulary of the ground-truth segmentation mask, indexed by id.
/// Obstacle classes outside the list map to the last entry.
pub const CLASS_VOCABULARY: [&str; 14] =
    ["none", "floor", "wall", "person", "chair", "table", "box", "trash_bin", "plant", "cabinet", "cart", "door", "bicycle", "other"];

const CLASS_COLORS: [[u8; 3]; 14] = [
    [0, 0, 0],
    [128, 118, 104],
    [214, 212, 205],
    [52, 64, 128],
    [150, 82, 40],
    [176, 140, 96],
    [190, 160, 110],
    [70, 110, 70],
    [40, 150, 60],
    [120, 120, 140],
    [200, 60, 50],
    [140, 100, 60],
    [220, 180, 30],
    [160, 40, 160],
];

pub fn class_id(name: &str) -> u8 {
    CLASS_VOCABULARY.iter().position(|c| c.eq_ignore_ascii_case(name)).unwrap_or(CLASS_VOCABULARY.len() - 1) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view, radians.
    pub hfov: f64,
    pub max_range: f64,
    /// Height of the optical center above the floor, meters.
    pub mount_height: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self { width: 256, height: 192, hfov: 57f64.to_radians(), max_range: f64::from(MAX_SENSOR_DEPTH), mount_height: 0.45 }
    }
}

impl CameraIntrinsics {
    pub fn with_size(width: usize, height: usize) -> Self {
        Self { width, height, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidDimensions { width: self.width, height: self.height });
        }
        if !(self.hfov > 0.0 && self.hfov < std::f64::consts::PI) {
            return Err(Error::OutOfRange { what: "camera hfov", value: self.hfov });
        }
        if !(self.max_range > 0.0) {
            return Err(Error::OutOfRange { what: "camera max range", value: self.max_range });
        }
        if !(self.mount_height > 0.0) {
            return Err(Error::OutOfRange { what: "camera mount height", value: self.mount_height });
        }
        Ok(())
    }

    /// Focal length in pixels (square pixels).
    pub fn focal(&self) -> f64 {
        self.width as f64 / 2.0 / (self.hfov / 2.0).tan()
    }

    /// Normalized horizontal image coordinate of a column center, positive right.
    pub fn column_slope(&self, col: usize) -> f64 {
        (col as f64 + 0.5 - self.width as f64 / 2.0) / self.focal()
    }

    /// Normalized vertical image coordinate of a row center, positive down.
    pub fn row_slope(&self, row: usize) -> f64 {
        (row as f64 + 0.5 - self.height as f64 / 2.0) / self.focal()
    }

    /// Horizontal 2-D ray direction through a column, forward component 1.
    pub fn column_dir(&self, pose: &Pose, col: usize) -> Vec2 {
        let f = pose.heading();
        f - f.perp() * self.column_slope(col)
    }
}

/// What a pixel sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Empty,
    Floor,
    Wall(u32),
    Obstacle(u32),
    Pedestrian(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub depth: DepthImage,
    pub labels: Vec<Label>,
}

struct Candidate {
    t_in: f64,
    t_out: f64,
    top: f64,
    label: Label,
}

/// First surface along a pixel ray among the candidates of its column.
fn first_hit(cands: &[Candidate], slope: f64, cam_h: f64, floor: bool, max_range: f64) -> (f64, Label) {
    let mut best = (f64::INFINITY, Label::Empty);
    if floor && slope > 0.0 {
        best = (cam_h / slope, Label::Floor);
    }
    for c in cands {
        if c.t_in >= best.0 {
            continue;
        }
        let z_in = cam_h - c.t_in * slope;
        let t = if (0.0..=c.top).contains(&z_in) {
            c.t_in
        } else if z_in > c.top && slope > 0.0 {
            // ray passes above the side and may come down onto the top face
            let t_top = (cam_h - c.top) / slope;
            if t_top <= c.t_out {
                t_top
            } else {
                continue;
            }
        } else {
            continue;
        };
        if t < best.0 {
            best = (t, c.label);
        }
    }
    if best.0 > max_range {
        (0.0, Label::Empty)
    } else {
        best
    }
}

/// Renders planar depth and per-pixel labels. `pedestrians` are the current
/// pedestrian centers, in scene order.
pub fn render(scene: &Scene, pedestrians: &[Vec2], pose: &Pose, cam: &CameraIntrinsics) -> Frame {
    let (w, h) = (cam.width, cam.height);
    let origin = pose.position();
    let slopes: Vec<f64> = (0..h).map(|r| cam.row_slope(r)).collect();
    let mut depth = vec![0f32; w * h];
    let mut labels = vec![Label::Empty; w * h];
    let mut cands = Vec::new();
    for col in 0..w {
        let dir = cam.column_dir(pose, col);
        cands.clear();
        for (i, wall) in scene.walls.iter().enumerate() {
            if let Some(t) = ray_segment(origin, dir, wall.a, wall.b) {
                cands.push(Candidate { t_in: t, t_out: t, top: wall.height, label: Label::Wall(i as u32) });
            }
        }
        for (i, o) in scene.obstacles.iter().enumerate() {
            if let Some((t_in, t_out)) = o.footprint.ray_span(origin, dir) {
                cands.push(Candidate { t_in, t_out, top: o.height, label: Label::Obstacle(i as u32) });
            }
        }
        for (i, (def, &c)) in scene.pedestrians.iter().zip(pedestrians).enumerate() {
            if let Some((t_in, t_out)) = super::geometry::ray_circle_span(origin, dir, c, def.radius) {
                cands.push(Candidate { t_in, t_out, top: def.height, label: Label::Pedestrian(i as u32) });
            }
        }
        for (row, &slope) in slopes.iter().enumerate() {
            let (t, label) = first_hit(&cands, slope, cam.mount_height, scene.floor, cam.max_range);
            depth[row * w + col] = t as f32;
            labels[row * w + col] = label;
        }
    }
    Frame { depth: DepthImage::new(w, h, depth).expect("rendered depth is finite"), labels }
}

pub fn render_depth(scene: &Scene, pedestrians: &[Vec2], pose: &Pose, cam: &CameraIntrinsics) -> DepthImage {
    render(scene, pedestrians, pose, cam).depth
}

pub fn ground_truth_detections(
    scene: &Scene,
    pedestrians: &[Vec2],
    pose: &Pose,
    cam: &CameraIntrinsics,
    map: &CategoryMap,
) -> Vec<Detection> {
    render(scene, pedestrians, pose, cam).detections(scene, map, MIN_DETECTION_PIXELS)
}

impl Frame {
    pub fn dims(&self) -> (usize, usize) {
        self.depth.dims()
    }

    pub fn label(&self, x: usize, y: usize) -> Label {
        self.labels[y * self.depth.width() + x]
    }

    /// Tight pixel boxes of every obstacle and pedestrian with at least
    /// `min_pixels` visible pixels; obstacles first, then pedestrians.
    pub fn detections(&self, scene: &Scene, map: &CategoryMap, min_pixels: usize) -> Vec<Detection> {
        let w = self.depth.width();
        let n_obs = scene.obstacles.len();
        let slots = n_obs + scene.pedestrians.len();
        let mut count = vec![0usize; slots];
        let mut boxes = vec![(u32::MAX, u32::MAX, 0u32, 0u32); slots];
        for (i, label) in self.labels.iter().enumerate() {
            let slot = match *label {
                Label::Obstacle(k) => k as usize,
                Label::Pedestrian(k) => n_obs + k as usize,
                _ => continue,
            };
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            count[slot] += 1;
            let b = &mut boxes[slot];
            *b = (b.0.min(x), b.1.min(y), b.2.max(x + 1), b.3.max(y + 1));
        }
        (0..slots)
            .filter(|&s| count[s] >= min_pixels.max(1))
            .map(|s| {
                let class_name = if s < n_obs { scene.obstacles[s].class_name.as_str() } else { "person" };
                let b = boxes[s];
                Detection { class_name: class_name.to_string(), category: map.categorize(class_name), bbox: BBox::new(b.0, b.1, b.2, b.3) }
            })
            .collect()
    }

    /// Ground-truth segmentation: one class id per pixel (see [`CLASS_VOCABULARY`]).
    pub fn class_ids(&self, scene: &Scene) -> GrayImage {
        let (w, h) = self.dims();
        let data = self
            .labels
            .iter()
            .map(|l| match *l {
                Label::Empty => 0,
                Label::Floor => 1,
                Label::Wall(_) => 2,
                Label::Obstacle(k) => class_id(&scene.obstacles[k as usize].class_name),
                Label::Pedestrian(_) => 3,
            })
            .collect();
        GrayImage::new(w, h, data).expect("dims match")
    }
}

/// Gray intensity used for a class id in the segmented representation.
pub fn class_intensity(id: u8) -> u8 {
    if usize::from(id) < CLASS_VOCABULARY.len() {
        id * 19
    } else {
        255
    }
}

/// Flat-shaded RGB from class ids and depth: the class color dimmed with
/// distance. Pixels with no depth return are black.
pub fn shade_rgb(class_ids: &GrayImage, depth: &DepthImage) -> Result<RgbImage> {
    if class_ids.dims() != depth.dims() {
        return Err(Error::DimensionMismatch { expected: class_ids.dims(), actual: depth.dims() });
    }
    let (w, h) = depth.dims();
    let mut data = Vec::with_capacity(w * h * 3);
    for (&id, &d) in class_ids.data().iter().zip(depth.data()) {
        let color = CLASS_COLORS[usize::from(id).min(CLASS_COLORS.len() - 1)];
        let k = if d > 0.0 { 1.0 - 0.6 * (d / MAX_SENSOR_DEPTH).min(1.0) } else { 0.0 };
        data.extend(color.iter().map(|&c| (f32::from(c) * k).round() as u8));
    }
    RgbImage::new(w, h, data)
}

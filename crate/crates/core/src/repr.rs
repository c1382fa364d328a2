//! Builds network observations of any kind from one raw render.

use crate::error::Result;
use crate::image::{DepthImage, Detection, GrayImage, PrimaryImage, ReprBundle, ReprKind};
use crate::noise::{augment, NoiseParams};
use crate::rng::RngStream;
use crate::semantic::{rasterize, CategoryMap};
use crate::sim::camera::{class_intensity, shade_rgb};

/// What the simulator (or a dataset record) provides per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RawObservation {
    pub depth: DepthImage,
    /// Ground-truth class id per pixel.
    pub class_ids: GrayImage,
    /// Boxes in `depth` pixel coordinates.
    pub detections: Vec<Detection>,
}

/// Rounds to whole millimeters, matching what the 16-bit depth files store.
pub fn quantize_mm(depth: &DepthImage) -> DepthImage {
    let data = depth.data().iter().map(|d| (d * 1000.0).round().clamp(0.0, 65535.0) / 1000.0).collect();
    DepthImage::new(depth.width(), depth.height(), data).expect("same dims")
}

/// Ground-truth segmentation image: each class id mapped to its gray level.
pub fn segmentation_image(class_ids: &GrayImage) -> GrayImage {
    let data = class_ids.data().iter().map(|&id| class_intensity(id)).collect();
    GrayImage::new(class_ids.width(), class_ids.height(), data).expect("same dims")
}

/// Noise (if the kind asks for it) is applied at the render resolution
/// from the `noise` substream; the result is then resized to `out`.
pub fn build_bundle(
    kind: ReprKind,
    raw: &RawObservation,
    out: (usize, usize),
    noise: &NoiseParams,
    map: &CategoryMap,
    rng: &RngStream,
) -> Result<ReprBundle> {
    let src = raw.depth.dims();
    let depth = if kind.is_noisy() { augment(&raw.depth, noise, &rng.named("noise"))? } else { raw.depth.clone() };
    let primary = match kind {
        ReprKind::Rgb | ReprKind::RgbNoise => PrimaryImage::Rgb(shade_rgb(&raw.class_ids, &depth)?),
        ReprKind::SegFc | ReprKind::SegPsp => PrimaryImage::Gray(segmentation_image(&raw.class_ids)),
        _ => PrimaryImage::Depth(depth),
    };
    let primary = primary.resize_nearest(out.0, out.1)?;
    let semantic = if kind.has_semantic() {
        let dets: Vec<Detection> = raw.detections.iter().map(|d| Detection { bbox: d.bbox.scaled(src, out), ..d.clone() }).collect();
        Some(rasterize(&dets, out.0, out.1, map)?)
    } else {
        None
    };
    ReprBundle::new(kind, primary, semantic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{BBox, RiskCategory};

    fn raw() -> RawObservation {
        let depth = DepthImage::new(8, 6, (0..48).map(|i| 1.0 + i as f32 * 0.05).collect()).unwrap();
        let class_ids = GrayImage::new(8, 6, (0..48).map(|i| (i % 5) as u8).collect()).unwrap();
        let detections = vec![Detection { class_name: "person".into(), category: RiskCategory::PEDESTRIAN, bbox: BBox::new(2, 2, 6, 4) }];
        RawObservation { depth, class_ids, detections }
    }

    #[test]
    fn every_kind_builds() {
        let map = CategoryMap::default();
        for kind in ReprKind::ALL {
            let b = build_bundle(kind, &raw(), (4, 3), &NoiseParams::default(), &map, &RngStream::new(1)).unwrap();
            assert_eq!(b.dims(), (4, 3));
            assert_eq!(b.kind(), kind);
        }
    }

    #[test]
    fn clean_and_noisy_depth_share_the_semantic_image() {
        let map = CategoryMap::default();
        let rng = RngStream::new(3);
        let a = build_bundle(ReprKind::DepthDet, &raw(), (8, 6), &NoiseParams::default(), &map, &rng).unwrap();
        let b = build_bundle(ReprKind::DepthNoiseDet, &raw(), (8, 6), &NoiseParams::default(), &map, &rng).unwrap();
        assert_eq!(a.semantic(), b.semantic());
        assert_eq!(a.semantic().unwrap().get(3, 2), 255);
    }

    #[test]
    fn quantization_is_millimeter() {
        let d = DepthImage::new(2, 1, vec![1.2344, 0.0]).unwrap();
        assert_eq!(quantize_mm(&d).data(), &[1.234, 0.0]);
    }
}

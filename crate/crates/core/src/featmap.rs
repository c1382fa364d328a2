//! Channel-averaged conv activations rendered as images.

use crate::error::{Error, Result};
use crate::image::{GrayImage, ReprBundle, RgbImage};
use crate::net::{Batch, Network};
use crate::scalar::Scalar;
use crate::sim::DirectionCommand;

/// Viridis-like anchors at intensities 0, 32, ..., 224, 255; other
/// intensities interpolate linearly between neighbours.
pub const VIRIDIS_ANCHORS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

pub const PALETTES: [&str; 2] = ["gray", "viridis"];

/// Planar network inputs for a bundle, checked against the network size.
pub fn network_inputs<T: Scalar>(net: &Network<T>, bundle: &ReprBundle) -> Result<(Vec<f32>, Option<Vec<f32>>)> {
    let def = net.def();
    if bundle.dims() != (def.width, def.height) {
        return Err(Error::DimensionMismatch { expected: (def.width, def.height), actual: bundle.dims() });
    }
    let sem = bundle.semantic().map(|s| s.data().iter().map(|&v| f32::from(v) / 255.0).collect());
    Ok((bundle.primary().normalized(), sem))
}

/// Default layer: the middle of the stack, `floor(n / 2)`.
pub fn default_layer(n_conv: usize) -> usize {
    n_conv / 2
}

/// Mean over channels of one conv layer's post-ReLU output, plus its
/// `(width, height)`.
pub fn channel_mean<T: Scalar>(
    net: &Network<T>,
    bundle: &ReprBundle,
    cmd: DirectionCommand,
    encoder: usize,
    layer: Option<usize>,
) -> Result<(Vec<f64>, usize, usize)> {
    let n_conv = net.conv_layers(encoder).ok_or(Error::OutOfRange { what: "encoder index", value: encoder as f64 })?;
    let layer = layer.unwrap_or(default_layer(n_conv));
    if layer >= n_conv {
        return Err(Error::OutOfRange { what: "conv layer index", value: layer as f64 });
    }
    let (p, s) = network_inputs(net, bundle)?;
    let conv = |v: &[f32]| v.iter().map(|x| T::from_f64_lossy(f64::from(*x))).collect::<Vec<T>>();
    let (p, s, c) = (conv(&p), s.as_deref().map(conv), conv(&cmd.one_hot()));
    let cache = net.forward(&Batch { size: 1, primary: &p, semantic: s.as_deref(), commands: &c })?;
    let act = &cache.encoders[encoder].convs[layer];
    let (ch, h, w) = (act.shape()[1], act.shape()[2], act.shape()[3]);
    let mut mean = vec![0.0; h * w];
    for plane in act.data().chunks_exact(h * w) {
        for (m, v) in mean.iter_mut().zip(plane) {
            *m += v.to_f64_lossy();
        }
    }
    mean.iter_mut().for_each(|m| *m /= ch as f64);
    Ok((mean, w, h))
}

/// Affine min-max map to `[0, 255]`; a constant map becomes all zeros.
pub fn normalize(values: &[f64], width: usize, height: usize) -> Result<GrayImage> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let data = values.iter().map(|&v| if span > 0.0 { (255.0 * (v - lo) / span).round() as u8 } else { 0 }).collect();
    GrayImage::new(width, height, data)
}

pub fn extract<T: Scalar>(
    net: &Network<T>,
    bundle: &ReprBundle,
    cmd: DirectionCommand,
    encoder: usize,
    layer: Option<usize>,
) -> Result<GrayImage> {
    let (mean, w, h) = channel_mean(net, bundle, cmd, encoder, layer)?;
    normalize(&mean, w, h)
}

pub fn palette_color(palette: &str, i: u8) -> Result<[u8; 3]> {
    match palette {
        "gray" => Ok([i; 3]),
        "viridis" => {
            let pos = f64::from(i) / 32.0;
            let k = (pos.floor() as usize).min(7);
            let t = if k == 7 { (f64::from(i) - 224.0) / 31.0 } else { pos - k as f64 };
            let (a, b) = (VIRIDIS_ANCHORS[k], VIRIDIS_ANCHORS[k + 1]);
            Ok(std::array::from_fn(|c| (f64::from(a[c]) + t * (f64::from(b[c]) - f64::from(a[c]))).round() as u8))
        }
        _ => Err(Error::Unknown { kind: "palette", name: palette.to_string() }),
    }
}

pub fn recolor(map: &GrayImage, palette: &str) -> Result<RgbImage> {
    let lut: Vec<[u8; 3]> = (0..=255u8).map(|i| palette_color(palette, i)).collect::<Result<_>>()?;
    let data = map.data().iter().flat_map(|&v| lut[usize::from(v)]).collect();
    RgbImage::new(map.width(), map.height(), data)
}

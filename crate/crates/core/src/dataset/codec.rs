//! Binary PGM (8- and 16-bit) and 8-bit RGB PNG.

use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{DepthImage, GrayImage, RgbImage};

/// Largest storable depth: 65535 mm.
pub const MAX_PGM_DEPTH: f32 = 65.535;

fn malformed(offset: usize, message: impl Into<String>) -> Error {
    Error::Malformed { format: "pgm", offset, message: message.into() }
}

fn header(width: usize, height: usize, maxval: u32) -> Vec<u8> {
    format!("P5\n{width} {height}\n{maxval}\n").into_bytes()
}

/// Depth in meters to 16-bit millimeter samples, big-endian.
pub fn encode_depth_pgm(img: &DepthImage) -> Result<Vec<u8>> {
    let mut out = header(img.width(), img.height(), 65535);
    out.reserve(img.data().len() * 2);
    for &d in img.data() {
        if !(0.0..=MAX_PGM_DEPTH).contains(&d) {
            return Err(Error::OutOfRange { what: "depth for 16-bit PGM", value: f64::from(d) });
        }
        let mm = (f64::from(d) * 1000.0).round() as u16;
        out.extend_from_slice(&mm.to_be_bytes());
    }
    Ok(out)
}

pub fn encode_gray_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = header(img.width(), img.height(), 255);
    out.extend_from_slice(img.data());
    out
}

struct Parsed<'a> {
    width: usize,
    height: usize,
    maxval: u32,
    body: &'a [u8],
    body_offset: usize,
}

fn parse(bytes: &[u8]) -> Result<Parsed<'_>> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(malformed(0, "missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(pos, "expected a decimal number"));
        }
        *field = std::str::from_utf8(&bytes[start..pos]).unwrap().parse().map_err(|_| malformed(start, "number too large"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(malformed(pos, "expected whitespace after maxval"));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(malformed(3, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(malformed(pos - 1, format!("maxval {maxval} out of range")));
    }
    let (width, height) = (w as usize, h as usize);
    let sample = if maxval > 255 { 2 } else { 1 };
    let need = width.checked_mul(height).and_then(|n| n.checked_mul(sample)).ok_or_else(|| malformed(3, "dimensions overflow"))?;
    let body = &bytes[pos..];
    if body.len() < need {
        return Err(malformed(bytes.len(), format!("truncated raster: {} of {need} bytes", body.len())));
    }
    if body.len() > need {
        return Err(malformed(pos + need, "trailing bytes after raster"));
    }
    Ok(Parsed { width, height, maxval: maxval as u32, body, body_offset: pos })
}

/// Inverse of [`encode_depth_pgm`]. Any maxval is read as millimeters.
pub fn decode_depth_pgm(bytes: &[u8]) -> Result<DepthImage> {
    let p = parse(bytes)?;
    if p.maxval <= 255 {
        return Err(malformed(p.body_offset - 1, "depth PGM must be 16-bit"));
    }
    let data = p.body.chunks_exact(2).map(|c| f32::from(u16::from_be_bytes([c[0], c[1]])) / 1000.0).collect();
    DepthImage::new(p.width, p.height, data)
}

pub fn decode_gray_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let p = parse(bytes)?;
    if p.maxval > 255 {
        return Err(malformed(p.body_offset - 1, "gray PGM must be 8-bit"));
    }
    GrayImage::new(p.width, p.height, p.body.to_vec())
}

pub fn write_depth_pgm(img: &DepthImage, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, encode_depth_pgm(img)?)?)
}

pub fn read_depth_pgm(path: &Path) -> Result<DepthImage> {
    decode_depth_pgm(&std::fs::read(path)?)
}

pub fn write_gray_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, encode_gray_pgm(img))?)
}

pub fn read_gray_pgm(path: &Path) -> Result<GrayImage> {
    decode_gray_pgm(&std::fs::read(path)?)
}

pub fn write_rgb_png(img: &RgbImage, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width() as u32, img.height() as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
    w.write_image_data(img.data()).map_err(|e| Error::Png(e.to_string()))?;
    w.finish().map_err(|e| Error::Png(e.to_string()))
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage> {
    let file = std::fs::File::open(path)?;
    let mut reader = png::Decoder::new(BufReader::new(file)).read_info().map_err(|e| Error::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Png("image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(e.to_string()))?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Png(format!("expected 8-bit RGB, got {:?} {:?}", info.color_type, info.bit_depth)));
    }
    buf.truncate(info.buffer_size());
    RgbImage::new(info.width as usize, info.height as usize, buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn millimeter_samples() {
        let img = DepthImage::new(2, 1, vec![1.234, 0.0]).unwrap();
        let b = encode_depth_pgm(&img).unwrap();
        let body = &b[b.len() - 4..];
        assert_eq!(u16::from_be_bytes([body[0], body[1]]), 1234);
        assert_eq!(u16::from_be_bytes([body[2], body[3]]), 0);
        assert_eq!(decode_depth_pgm(&b).unwrap().data()[1], 0.0);
    }

    #[test]
    fn comments_in_header() {
        let mut b = b"P5 # made by hand\n2 1\n# max\n255\n".to_vec();
        b.extend_from_slice(&[7, 9]);
        assert_eq!(decode_gray_pgm(&b).unwrap().data(), &[7, 9]);
    }

    #[test]
    fn errors_carry_offsets() {
        let e = decode_gray_pgm(b"P6\n1 1\n255\n\0").unwrap_err();
        assert!(matches!(e, Error::Malformed { offset: 0, .. }));
        let e = decode_gray_pgm(b"P5\n2 x\n255\n\0\0").unwrap_err();
        assert!(matches!(e, Error::Malformed { offset: 5, .. }));
        let e = decode_gray_pgm(b"P5\n2 2\n255\n\0").unwrap_err();
        assert!(matches!(e, Error::Malformed { offset: 12, .. }));
    }

    #[test]
    fn too_deep_rejected() {
        let img = DepthImage::new(1, 1, vec![70.0]).unwrap();
        assert!(encode_depth_pgm(&img).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::new(3, 2, (0..18).map(|v| v * 13).collect()).unwrap();
        let p = dir.path().join("a.png");
        write_rgb_png(&img, &p).unwrap();
        assert_eq!(read_rgb_png(&p).unwrap(), img);
    }

    proptest::proptest! {
        #[test]
        fn depth_round_trip_within_half_mm(v in proptest::collection::vec(0.0f32..65.5, 1..64)) {
            let n = v.len();
            let img = DepthImage::new(n, 1, v).unwrap();
            let back = decode_depth_pgm(&encode_depth_pgm(&img).unwrap()).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                proptest::prop_assert!((a - b).abs() <= 0.0005 + 1e-6 * a);
            }
        }
    }
}

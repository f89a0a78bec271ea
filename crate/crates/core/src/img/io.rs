use std::fs;
use std::path::Path;

use super::ImagePlane;
use crate::{Error, Result};

fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Interleave a planar image into 8-bit HWC bytes.
fn interleave(img: &ImagePlane) -> Vec<u8> {
    let (h, w, c) = img.shape();
    let mut out = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.push(to_u8(img.get(ch, y, x)));
            }
        }
    }
    out
}

fn from_interleaved(h: usize, w: usize, c: usize, bytes: &[u8]) -> Result<ImagePlane> {
    if bytes.len() < h * w * c {
        return Err(Error::invalid(format!(
            "pixel payload has {} bytes, expected {}",
            bytes.len(),
            h * w * c
        )));
    }
    ImagePlane::from_fn(h, w, c, |ch, y, x| bytes[(y * w + x) * c + ch] as f64 / 255.0)
}

/// Read an 8-bit PNG, PGM (P5) or PPM (P6). PNGs with alpha drop it; other
/// colour types are converted to gray or RGB.
pub fn read_image(path: &Path) -> Result<ImagePlane> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        return decode_pnm(&bytes);
    }
    let decoded = image::load_from_memory(&bytes)?;
    use image::ColorType::*;
    match decoded.color() {
        L8 | La8 | L16 | La16 => {
            let g = decoded.to_luma8();
            from_interleaved(g.height() as usize, g.width() as usize, 1, g.as_raw())
        }
        _ => {
            let rgb = decoded.to_rgb8();
            from_interleaved(rgb.height() as usize, rgb.width() as usize, 3, rgb.as_raw())
        }
    }
}

/// Write by extension: `.png`, `.pgm` or `.ppm`.
pub fn write_image(img: &ImagePlane, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") | Some("ppm") => write_pnm(img, path),
        _ => write_png(img, path),
    }
}

pub fn write_png(img: &ImagePlane, path: &Path) -> Result<()> {
    let color = if img.channels() == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(
        path,
        &interleave(img),
        img.width() as u32,
        img.height() as u32,
        color,
        image::ImageFormat::Png,
    )?;
    Ok(())
}

/// Binary PGM for one channel, PPM for three; maxval 255.
pub fn write_pnm(img: &ImagePlane, path: &Path) -> Result<()> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(interleave(img));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn decode_pnm(bytes: &[u8]) -> Result<ImagePlane> {
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
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
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::invalid("malformed PNM header"))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(Error::invalid(format!("PNM maxval {maxval} unsupported")));
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::invalid("malformed PNM header"));
    }
    from_interleaved(h, w, channels, &bytes[pos + 1..])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quantized(c: usize) -> ImagePlane {
        ImagePlane::from_fn(5, 7, c, |ch, y, x| ((ch * 31 + y * 7 + x * 13) % 256) as f64 / 255.0)
            .unwrap()
    }

    #[test]
    fn png_and_pnm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for c in [1, 3] {
            let img = quantized(c);
            for ext in ["png", if c == 1 { "pgm" } else { "ppm" }] {
                let p = dir.path().join(format!("img{c}.{ext}"));
                write_image(&img, &p).unwrap();
                let back = read_image(&p).unwrap();
                assert_eq!(back.shape(), img.shape());
                for (a, b) in back.data().iter().zip(img.data()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pnm_header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        write_pnm(&quantized(1), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n7 5\n255\n"));
        assert_eq!(bytes.len(), 11 + 35);
    }

    #[test]
    fn pnm_comments_and_bad_maxval() {
        let mut ok = b"P5 # comment\n2 1\n255\n".to_vec();
        ok.extend([0u8, 255]);
        let img = decode_pnm(&ok).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
        let bad = b"P5\n2 1\n65535\n\0\0\0\0".to_vec();
        assert!(decode_pnm(&bad).is_err());
    }
}

use std::f64::consts::PI;

use crate::{Error, ImagePlane, Result};

/// Annex K luminance quantization table, row-major.
pub const LUMA_QUANT: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// The libjpeg quality rule applied to [`LUMA_QUANT`], entries clamped to >= 1.
pub fn quant_table(quality: u8) -> Result<[f64; 64]> {
    if !(1..=100).contains(&quality) {
        return Err(Error::invalid(format!("quality must be in 1..=100, got {quality}")));
    }
    let q = quality as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut t = [0.0; 64];
    for (dst, &base) in t.iter_mut().zip(&LUMA_QUANT) {
        *dst = ((base as u32 * scale + 50) / 100).max(1) as f64;
    }
    Ok(t)
}

/// Orthonormal DCT-II basis, `basis[u][x]`.
fn dct_basis() -> [[f64; 8]; 8] {
    let mut b = [[0.0; 8]; 8];
    for (u, row) in b.iter_mut().enumerate() {
        let cu = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (x, v) in row.iter_mut().enumerate() {
            *v = cu * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos();
        }
    }
    b
}

fn transform(block: &[f64; 64], basis: &[[f64; 8]; 8], inverse: bool) -> [f64; 64] {
    let coef = |a: usize, b: usize| if inverse { basis[b][a] } else { basis[a][b] };
    let mut tmp = [0.0; 64];
    for r in 0..8 {
        for u in 0..8 {
            tmp[r * 8 + u] = (0..8).map(|x| coef(u, x) * block[r * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| coef(v, y) * tmp[y * 8 + u]).sum();
        }
    }
    out
}

/// Block-DCT compression round trip: quantize and dequantize every 8x8
/// block with the luminance table. Each channel is coded independently;
/// edges are replicated up to a multiple of 8.
pub fn jpeg_compress(img: &ImagePlane, quality: u8) -> Result<ImagePlane> {
    let table = quant_table(quality)?;
    let basis = dct_basis();
    let (h, w, c) = img.shape();
    let (bh, bw) = (h.div_ceil(8), w.div_ceil(8));
    let mut data = vec![0.0; h * w * c];
    for ch in 0..c {
        let src = img.channel(ch);
        let dst = &mut data[ch * h * w..(ch + 1) * h * w];
        for by in 0..bh {
            for bx in 0..bw {
                let mut block = [0.0; 64];
                for y in 0..8 {
                    let sy = (by * 8 + y).min(h - 1);
                    for x in 0..8 {
                        let sx = (bx * 8 + x).min(w - 1);
                        block[y * 8 + x] = src[sy * w + sx] * 255.0 - 128.0;
                    }
                }
                let mut coefs = transform(&block, &basis, false);
                for (v, q) in coefs.iter_mut().zip(&table) {
                    *v = (*v / q).round() * q;
                }
                let rec = transform(&coefs, &basis, true);
                for y in 0..8 {
                    let oy = by * 8 + y;
                    if oy >= h {
                        break;
                    }
                    for x in 0..8 {
                        let ox = bx * 8 + x;
                        if ox < w {
                            dst[oy * w + ox] = (rec[y * 8 + x] + 128.0) / 255.0;
                        }
                    }
                }
            }
        }
    }
    Ok(ImagePlane::from_raw_clamped(h, w, c, data))
}

use super::reflect101;
use crate::{Error, ImagePlane, Result};

const CUBIC_A: f64 = -0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Down,
    Up,
}

/// Keys cubic convolution kernel with `a = -0.5` (Catmull-Rom).
pub fn cubic(x: f64) -> f64 {
    let t = x.abs();
    if t <= 1.0 {
        (CUBIC_A + 2.0) * t * t * t - (CUBIC_A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        CUBIC_A * t * t * t - 5.0 * CUBIC_A * t * t + 8.0 * CUBIC_A * t - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

struct AxisTaps {
    index: Vec<[usize; 4]>,
    weight: Vec<[f64; 4]>,
}

/// Pixel-center aligned mapping from `n_out` samples back onto `n_in`.
fn axis_taps(n_in: usize, n_out: usize) -> AxisTaps {
    let ratio = n_in as f64 / n_out as f64;
    let mut index = Vec::with_capacity(n_out);
    let mut weight = Vec::with_capacity(n_out);
    for o in 0..n_out {
        let src = (o as f64 + 0.5) * ratio - 0.5;
        let base = src.floor();
        let frac = src - base;
        let mut idx = [0usize; 4];
        let mut wt = [0f64; 4];
        for k in 0..4 {
            let off = k as f64 - 1.0;
            idx[k] = reflect101(base as isize + k as isize - 1, n_in);
            wt[k] = cubic(frac - off);
        }
        let s: f64 = wt.iter().sum();
        wt.iter_mut().for_each(|v| *v /= s);
        index.push(idx);
        weight.push(wt);
    }
    AxisTaps { index, weight }
}

/// Raw separable bicubic resampling of one channel.
pub(crate) fn resize_channel(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let (tx, ty) = (axis_taps(w, ow), axis_taps(h, oh));
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            let (i, k) = (&tx.index[x], &tx.weight[x]);
            tmp[y * ow + x] = (0..4).map(|t| k[t] * row[i[t]]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        let (i, k) = (&ty.index[y], &ty.weight[y]);
        let dst = &mut out[y * ow..(y + 1) * ow];
        for t in 0..4 {
            let line = &tmp[i[t] * ow..(i[t] + 1) * ow];
            for (d, s) in dst.iter_mut().zip(line) {
                *d += k[t] * s;
            }
        }
    }
    out
}

/// Bicubic resize to an arbitrary size.
pub fn resize_to(img: &ImagePlane, height: usize, width: usize) -> Result<ImagePlane> {
    if height == 0 || width == 0 {
        return Err(Error::invalid("resize target must be non-empty"));
    }
    let (h, w, c) = img.shape();
    if (h, w) == (height, width) {
        return Ok(img.clone());
    }
    let mut data = Vec::with_capacity(height * width * c);
    for ch in 0..c {
        data.extend(resize_channel(img.channel(ch), h, w, height, width));
    }
    Ok(ImagePlane::from_raw_clamped(height, width, c, data))
}

/// Bicubic resize by an integer factor.
pub fn resize(img: &ImagePlane, scale: usize, direction: Direction) -> Result<ImagePlane> {
    if scale == 0 {
        return Err(Error::invalid("resize scale must be >= 1"));
    }
    let (h, w, _) = img.shape();
    match direction {
        Direction::Down => {
            if h % scale != 0 || w % scale != 0 {
                return Err(Error::invalid(format!(
                    "{h}x{w} is not divisible by scale {scale}"
                )));
            }
            resize_to(img, h / scale, w / scale)
        }
        Direction::Up => resize_to(img, h * scale, w * scale),
    }
}

use super::reflect101;
use crate::{Error, ImagePlane, Result};

/// Normalized 1-D Gaussian taps of radius `ceil(3 sigma)`. The 2-D kernel is
/// the outer product, which is already normalized.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Raw (unclamped) separable blur on one channel.
pub(crate) fn blur_channel(src: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * row[reflect101(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for (k, kv) in kernel.iter().enumerate() {
            let sy = reflect101(y as isize + k as isize - r, h);
            let (dst, line) = (&mut out[y * w..(y + 1) * w], &tmp[sy * w..(sy + 1) * w]);
            for (d, s) in dst.iter_mut().zip(line) {
                *d += kv * s;
            }
        }
    }
    out
}

/// Isotropic Gaussian blur with reflect-101 borders.
pub fn gaussian_blur(img: &ImagePlane, sigma: f64) -> Result<ImagePlane> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("blur sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let (h, w, c) = img.shape();
    let kernel = gaussian_kernel(sigma);
    let mut data = Vec::with_capacity(h * w * c);
    for ch in 0..c {
        data.extend(blur_channel(img.channel(ch), h, w, &kernel));
    }
    Ok(ImagePlane::from_raw_clamped(h, w, c, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_identity() {
        let img = ImagePlane::from_fn(9, 7, 3, |c, y, x| ((c + y * x) % 5) as f64 / 4.0).unwrap();
        assert_eq!(gaussian_blur(&img, 0.0).unwrap(), img);
        assert!(gaussian_blur(&img, -0.1).is_err());
    }

    #[test]
    fn constant_preserved_before_clamp() {
        let src = vec![0.37; 12 * 10];
        for sigma in [0.3, 1.0, 2.7, 5.0] {
            let out = blur_channel(&src, 12, 10, &gaussian_kernel(sigma));
            assert!(out.iter().all(|v| (v - 0.37).abs() < 1e-9), "sigma {sigma}");
        }
    }

    #[test]
    fn impulse_center_matches_continuous_gaussian() {
        let mut img = ImagePlane::constant(21, 21, 1, 0.0).unwrap();
        img.set(0, 10, 10, 1.0);
        let out = gaussian_blur(&img, 1.0).unwrap();
        // Discrete center weight: (1 / sum_{i=-3..3} exp(-i^2/2))^2.
        let s: f64 = (-3i32..=3).map(|i| (-(i * i) as f64 / 2.0).exp()).sum();
        let discrete = 1.0 / (s * s);
        assert!((out.get(0, 10, 10) - discrete).abs() < 1e-12);
        let continuous = 1.0 / (2.0 * std::f64::consts::PI);
        assert!((out.get(0, 10, 10) - continuous).abs() / continuous < 0.02);
        let total: f64 = out.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

use rand_distr::{Distribution, Normal};

use crate::{seed, Error, ImagePlane, Result};

/// Additive i.i.d. Gaussian noise, seeded, then clamped.
pub fn add_gaussian_noise(img: &ImagePlane, sigma: f64, seed: u64) -> Result<ImagePlane> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = seed::rng(seed);
    let (h, w, c) = img.shape();
    let data = img
        .data()
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    Ok(ImagePlane::from_raw_clamped(h, w, c, data))
}

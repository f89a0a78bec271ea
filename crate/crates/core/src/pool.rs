//! HR image pools: loaded from a directory, or generated procedurally so the
//! whole pipeline runs without any downloaded dataset.

use std::path::Path;

use rand::Rng;

use crate::img::{read_image, to_luma};
use crate::{seed, Error, ImagePlane, Result};

/// A collection of HR source images.
#[derive(Clone, Debug)]
pub struct HrPool {
    pub images: Vec<ImagePlane>,
}

impl HrPool {
    /// Procedural pool: `count` images of `size x size` RGB.
    pub fn synthetic(count: usize, size: usize, base_seed: u64) -> Self {
        let images = (0..count)
            .map(|i| synthetic_image(seed::derive(base_seed, &[seed::stream::POOL, i as u64]), size, size))
            .collect();
        HrPool { images }
    }

    /// Decode every PNG/PGM/PPM file in `dir`, sorted by file name.
    /// Unreadable files are skipped with a warning; an all-failed directory is an error.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
                    Some("png" | "pgm" | "ppm")
                )
            })
            .collect();
        paths.sort();
        let mut images = Vec::new();
        let mut failed = 0;
        for p in &paths {
            match read_image(p) {
                Ok(img) => images.push(img),
                Err(e) => {
                    failed += 1;
                    log::warn!("skipping {}: {e}", p.display());
                }
            }
        }
        if images.is_empty() {
            return Err(Error::invalid(format!(
                "no decodable images in {} ({failed} failed)",
                dir.display()
            )));
        }
        Ok(HrPool { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn to_luma(&self) -> Result<Self> {
        Ok(HrPool {
            images: self.images.iter().map(to_luma).collect::<Result<_>>()?,
        })
    }

    /// Split off the last `count` images (validation) from the rest (training).
    pub fn split(mut self, count: usize) -> Result<(HrPool, HrPool)> {
        if count == 0 || count >= self.images.len() {
            return Err(Error::invalid(format!(
                "cannot hold out {count} of {} images",
                self.images.len()
            )));
        }
        let held = self.images.split_off(self.images.len() - count);
        Ok((self, HrPool { images: held }))
    }
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Multi-octave bilinear value noise in roughly `[-1, 1]`.
fn value_noise(rng: &mut impl Rng, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    let mut amp = 0.5;
    for cells in [4usize, 8, 16] {
        let grid: Vec<f64> = (0..(cells + 1) * (cells + 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
        for y in 0..h {
            let gy = y as f64 / h as f64 * cells as f64;
            let (iy, fy) = (gy.floor() as usize, gy.fract());
            for x in 0..w {
                let gx = x as f64 / w as f64 * cells as f64;
                let (ix, fx) = (gx.floor() as usize, gx.fract());
                let g = |a: usize, b: usize| grid[a * (cells + 1) + b];
                let top = g(iy, ix) * (1.0 - fx) + g(iy, ix + 1) * fx;
                let bot = g(iy + 1, ix) * (1.0 - fx) + g(iy + 1, ix + 1) * fx;
                out[y * w + x] += amp * (top * (1.0 - fy) + bot * fy);
            }
        }
        amp *= 0.5;
    }
    out
}

enum Shape {
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64, angle: f64 },
    Rect { cy: f64, cx: f64, hy: f64, hx: f64, angle: f64 },
    Stripes { cy: f64, cx: f64, r: f64, freq: f64, angle: f64 },
}

impl Shape {
    /// Coverage in [0, 1] with a one-pixel soft edge, plus a stripe modulation.
    fn coverage(&self, y: f64, x: f64) -> (f64, f64) {
        let rot = |cy: f64, cx: f64, a: f64| {
            let (dy, dx) = (y - cy, x - cx);
            (dy * a.cos() - dx * a.sin(), dy * a.sin() + dx * a.cos())
        };
        match *self {
            Shape::Ellipse { cy, cx, ry, rx, angle } => {
                let (u, v) = rot(cy, cx, angle);
                let d = ((u / ry).powi(2) + (v / rx).powi(2)).sqrt();
                let edge = 1.0 / ry.min(rx);
                (1.0 - smoothstep(1.0 - edge, 1.0 + edge, d), 1.0)
            }
            Shape::Rect { cy, cx, hy, hx, angle } => {
                let (u, v) = rot(cy, cx, angle);
                let d = (u.abs() - hy).max(v.abs() - hx);
                (1.0 - smoothstep(-0.7, 0.7, d), 1.0)
            }
            Shape::Stripes { cy, cx, r, freq, angle } => {
                let (u, v) = rot(cy, cx, angle);
                let d = (u * u + v * v).sqrt();
                let m = 0.5 + 0.5 * (u * freq).sin();
                (1.0 - smoothstep(r - 1.0, r + 1.0, d), m)
            }
        }
    }
}

/// A deterministic RGB test image with gradients, soft-edged shapes,
/// stripe textures and fractal noise.
pub fn synthetic_image(seed: u64, height: usize, width: usize) -> ImagePlane {
    let mut rng = seed::rng(seed);
    let (hf, wf) = (height as f64, width as f64);
    let color = |rng: &mut rand_chacha::ChaCha8Rng| -> [f64; 3] {
        [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)]
    };
    let c0 = color(&mut rng);
    let c1 = color(&mut rng);
    let grad_angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut planes: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            let mut p = vec![0.0; height * width];
            for y in 0..height {
                for x in 0..width {
                    let t = ((y as f64 / hf - 0.5) * grad_angle.sin() + (x as f64 / wf - 0.5) * grad_angle.cos()) + 0.5;
                    p[y * width + x] = c0[c] * (1.0 - t) + c1[c] * t;
                }
            }
            p
        })
        .collect();

    let n_shapes = rng.random_range(6..14);
    let scale = hf.min(wf);
    for _ in 0..n_shapes {
        let cy = rng.random_range(0.0..hf);
        let cx = rng.random_range(0.0..wf);
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let shape = match rng.random_range(0..3) {
            0 => Shape::Ellipse {
                cy,
                cx,
                ry: rng.random_range(0.05..0.3) * scale,
                rx: rng.random_range(0.05..0.3) * scale,
                angle,
            },
            1 => Shape::Rect {
                cy,
                cx,
                hy: rng.random_range(0.04..0.25) * scale,
                hx: rng.random_range(0.04..0.25) * scale,
                angle,
            },
            _ => Shape::Stripes {
                cy,
                cx,
                r: rng.random_range(0.1..0.3) * scale,
                freq: rng.random_range(0.3..1.6),
                angle,
            },
        };
        let fg = color(&mut rng);
        let alt = color(&mut rng);
        for y in 0..height {
            for x in 0..width {
                let (cov, m) = shape.coverage(y as f64, x as f64);
                if cov <= 0.0 {
                    continue;
                }
                for (c, plane) in planes.iter_mut().enumerate() {
                    let target = fg[c] * m + alt[c] * (1.0 - m);
                    let v = &mut plane[y * width + x];
                    *v = *v * (1.0 - cov) + target * cov;
                }
            }
        }
    }

    let texture = value_noise(&mut rng, height, width);
    let amp = rng.random_range(0.04..0.12);
    let data: Vec<f64> = planes
        .into_iter()
        .flat_map(|p| p.into_iter().zip(&texture).map(|(v, t)| v + amp * t).collect::<Vec<_>>())
        .collect();
    ImagePlane::from_raw_clamped(height, width, 3, data)
}

//! Finite-difference verification of the reverse-mode gradients.
//!
//! The numeric side always runs the forward-only 64-bit loss with central
//! differences of per-pixel residuals; the analytic side runs either the 32- or 64-bit backward pass
//! on the same parameter values.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Real, SRNet};
use crate::{seed, ImagePlane, Result};

#[derive(Clone, Debug)]
pub struct Probe {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub precision: &'static str,
    pub probes: Vec<Probe>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.probes.iter().map(|p| p.rel_err).fold(0.0, f64::max)
    }
}

/// Relative step for the central difference. The loss is piecewise linear
/// in any single parameter, so the step only has to stay clear of ReLU and
/// L1 kinks.
pub const FD_STEP: f64 = 1e-5;

pub fn relative_error(a: f64, b: f64) -> f64 {
    let den = a.abs().max(b.abs());
    if den < 1e-12 {
        (a - b).abs()
    } else {
        (a - b).abs() / den
    }
}

struct Problem {
    net: SRNet<f64>,
    hr: Vec<ImagePlane>,
    lr: Vec<ImagePlane>,
}

fn random_image(rng: &mut rand_chacha::ChaCha8Rng, h: usize, w: usize, c: usize) -> ImagePlane {
    ImagePlane::from_fn(h, w, c, |_, _, _| rng.random_range(0.0..1.0)).expect("valid shape")
}

/// A random 3-channel net with non-zero biases and a two-sample batch of
/// 8x8 LR inputs.
fn problem(seed_value: u64) -> Result<Problem> {
    let mut rng = seed::rng(seed::derive(seed_value, &[seed::stream::PROBE]));
    let mut net = SRNet::<f32>::new(3, 2, seed_value)?;
    let bias = Normal::new(0.0, 0.05).expect("positive std");
    for p in net.params_mut().iter_mut() {
        if *p == 0.0 {
            *p = bias.sample(&mut rng) as f32;
        }
    }
    let lr = (0..2).map(|_| random_image(&mut rng, 8, 8, 3)).collect();
    let hr = (0..2).map(|_| random_image(&mut rng, 16, 16, 3)).collect();
    Ok(Problem { net: net.cast(), hr, lr })
}

fn run<T: Real>(seed_value: u64, probes: usize, precision: &'static str) -> Result<GradCheckReport> {
    let pb = problem(seed_value)?;
    let batch: Vec<(&ImagePlane, &ImagePlane)> = pb.hr.iter().zip(&pb.lr).collect();
    let analytic_net: SRNet<T> = pb.net.cast();
    let (_, grad) = analytic_net.loss_and_grad(&batch)?;

    let mut rng = seed::rng(seed::derive(seed_value, &[seed::stream::PROBE, 1]));
    let mut out = Vec::with_capacity(probes);
    for _ in 0..probes {
        let index = rng.random_range(0..pb.net.param_count());
        let theta = pb.net.params()[index];
        let h = FD_STEP * theta.abs().max(1.0);
        let mut plus = pb.net.clone();
        plus.params_mut()[index] = theta + h;
        let mut minus = pb.net.clone();
        minus.params_mut()[index] = theta - h;
        // difference per pixel so the rounding of the total loss cancels
        let (rp, rm) = (plus.residuals(&batch)?, minus.residuals(&batch)?);
        let delta: f64 = rp.iter().zip(&rm).map(|(p, m)| p.abs() - m.abs()).sum();
        let numeric = delta / rp.len() as f64 / (2.0 * h);
        out.push(Probe {
            index,
            analytic: grad[index],
            numeric,
            rel_err: relative_error(grad[index], numeric),
        });
    }
    Ok(GradCheckReport { precision, probes: out })
}

pub fn check_f32(seed_value: u64, probes: usize) -> Result<GradCheckReport> {
    run::<f32>(seed_value, probes, "f32")
}

pub fn check_f64(seed_value: u64, probes: usize) -> Result<GradCheckReport> {
    run::<f64>(seed_value, probes, "f64")
}

//! How strongly does each degradation operator separate tasks?
//!
//! A base net is trained on mixed degradations. Then, for each severity level
//! of one operator (all others held fixed), a copy is fine-tuned on that level
//! alone. The spread of the per-level PSNR gains measures how differently the
//! levels want to be restored.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_pairs, MetricConfig};
use crate::degrade::{add_gaussian_noise, apply_chain, gaussian_blur, jpeg_compress, resize_to, DegradationConfig};
use crate::pool::HrPool;
use crate::sr_model::{OptimState, SRNet};
use crate::taskspace::SamplePair;
use crate::{seed, Error, ImagePlane, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorAxis {
    Blur,
    Noise,
    Quality,
    Scale,
}

impl OperatorAxis {
    pub const ALL: [OperatorAxis; 4] = [OperatorAxis::Blur, OperatorAxis::Noise, OperatorAxis::Quality, OperatorAxis::Scale];

    pub fn name(self) -> &'static str {
        match self {
            OperatorAxis::Blur => "blur",
            OperatorAxis::Noise => "noise",
            OperatorAxis::Quality => "quality",
            OperatorAxis::Scale => "scale",
        }
    }
}

impl std::str::FromStr for OperatorAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OperatorAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown operator axis `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminabilityConfig {
    /// Nominal SR factor of the network.
    pub scale: usize,
    pub blur_range: (f64, f64),
    pub noise_range: (f64, f64),
    pub quality_range: (u8, u8),
    /// Continuous downsampling factors for the scale axis.
    pub scale_range: (f64, f64),
    /// Values of the operators that are not being swept.
    pub fixed_blur: f64,
    pub fixed_noise: f64,
    pub fixed_quality: u8,
    pub pretrain_iterations: usize,
    pub finetune_iterations: usize,
    pub batch_size: usize,
    pub patch: usize,
    pub learning_rate: f64,
    pub finetune_learning_rate: f64,
    pub val_count: usize,
    pub init_seed: u64,
    pub data_seed: u64,
}

impl Default for DiscriminabilityConfig {
    fn default() -> Self {
        DiscriminabilityConfig {
            scale: 2,
            blur_range: (0.2, 3.0),
            noise_range: (0.004, 0.12),
            quality_range: (60, 95),
            scale_range: (1.5, 4.0),
            fixed_blur: 1.0,
            fixed_noise: 0.01,
            fixed_quality: 90,
            pretrain_iterations: 800,
            finetune_iterations: 150,
            batch_size: 8,
            patch: 32,
            learning_rate: 2e-3,
            finetune_learning_rate: 1e-3,
            val_count: 8,
            init_seed: 1,
            data_seed: 2,
        }
    }
}

/// Outcome of fine-tuning on one severity level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelOutcome {
    pub severity: f64,
    pub base_psnr: f64,
    pub tuned_psnr: f64,
    pub improvement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminabilityReport {
    pub axis: OperatorAxis,
    pub levels: Vec<LevelOutcome>,
    /// Population variance of the improvements.
    pub variance: f64,
}

pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// One concrete degradation, with a possibly fractional downsampling factor.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Point {
    blur: f64,
    noise: f64,
    quality: u8,
    factor: f64,
}

fn degrade(hr: &ImagePlane, p: Point, scale: usize, chain_seed: u64) -> Result<ImagePlane> {
    if p.factor == scale as f64 {
        let cfg = DegradationConfig {
            blur_sigma: p.blur,
            noise_sigma: p.noise,
            scale,
            jpeg_quality: p.quality,
            ..Default::default()
        };
        return apply_chain(hr, &cfg, chain_seed);
    }
    let (h, w) = (hr.height(), hr.width());
    let small = |n: usize| ((n as f64 / p.factor).round() as usize).max(1);
    let x = gaussian_blur(hr, p.blur)?;
    let x = resize_to(&x, small(h), small(w))?;
    let x = add_gaussian_noise(&x, p.noise, chain_seed)?;
    let x = jpeg_compress(&x, p.quality)?;
    resize_to(&x, h / scale, w / scale)
}

fn validate(cfg: &DiscriminabilityConfig) -> Result<()> {
    let bad = |m: &str| Err(Error::Config(m.to_string()));
    if cfg.scale == 0 || cfg.patch % cfg.scale != 0 || cfg.patch / cfg.scale < 8 {
        return bad("patch must be a multiple of scale giving LR crops of at least 8 pixels");
    }
    if cfg.batch_size == 0 || cfg.val_count == 0 {
        return bad("batch_size and val_count must be >= 1");
    }
    let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi;
    if !ordered(cfg.blur_range) || !ordered(cfg.noise_range) || !ordered(cfg.scale_range) || cfg.scale_range.0 < 1.0 {
        return bad("operator ranges must be ordered and non-negative; scale factors >= 1");
    }
    let (qlo, qhi) = cfg.quality_range;
    if qlo == 0 || qhi > 100 || qlo > qhi || !(1..=100).contains(&cfg.fixed_quality) {
        return bad("quality values must lie in 1..=100");
    }
    if !(cfg.learning_rate > 0.0 && cfg.finetune_learning_rate > 0.0) {
        return bad("learning rates must be positive");
    }
    Ok(())
}

/// `count` severities spread evenly over the axis range (the midpoint for one).
pub fn severity_levels(cfg: &DiscriminabilityConfig, axis: OperatorAxis, count: usize) -> Vec<f64> {
    let (lo, hi) = match axis {
        OperatorAxis::Blur => cfg.blur_range,
        OperatorAxis::Noise => cfg.noise_range,
        OperatorAxis::Quality => (cfg.quality_range.0 as f64, cfg.quality_range.1 as f64),
        OperatorAxis::Scale => cfg.scale_range,
    };
    let raw: Vec<f64> = match count {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    };
    if axis == OperatorAxis::Quality {
        raw.into_iter().map(f64::round).collect()
    } else {
        raw
    }
}

fn level_point(cfg: &DiscriminabilityConfig, axis: OperatorAxis, severity: f64) -> Point {
    let mut p = Point {
        blur: cfg.fixed_blur,
        noise: cfg.fixed_noise,
        quality: cfg.fixed_quality,
        factor: cfg.scale as f64,
    };
    match axis {
        OperatorAxis::Blur => p.blur = severity,
        OperatorAxis::Noise => p.noise = severity,
        OperatorAxis::Quality => p.quality = severity.round().clamp(1.0, 100.0) as u8,
        OperatorAxis::Scale => p.factor = severity,
    }
    p
}

fn crop(pool: &HrPool, size: usize, crop_seed: u64) -> Result<ImagePlane> {
    let mut rng = seed::rng(crop_seed);
    let src = &pool.images[rng.random_range(0..pool.len())];
    if src.height() < size || src.width() < size {
        return Err(Error::invalid(format!("patch {size} larger than a {}x{} source", src.height(), src.width())));
    }
    let top = rng.random_range(0..=src.height() - size);
    let left = rng.random_range(0..=src.width() - size);
    src.crop(top, left, size, size)
}

fn train(
    net: &mut SRNet<f32>,
    cfg: &DiscriminabilityConfig,
    pool: &HrPool,
    iterations: usize,
    lr: f64,
    stream: u64,
    point_for: impl Fn(u64) -> Point,
) -> Result<()> {
    let mut opt = OptimState::new(net.param_count(), lr);
    for t in 0..iterations {
        let pairs = (0..cfg.batch_size)
            .map(|b| {
                let s = seed::derive(stream, &[t as u64, b as u64]);
                let hr = crop(pool, cfg.patch, s)?;
                let lr = degrade(&hr, point_for(s), cfg.scale, seed::derive(s, &[2]))?;
                Ok((hr, lr))
            })
            .collect::<Result<Vec<_>>>()?;
        let batch: Vec<(&ImagePlane, &ImagePlane)> = pairs.iter().map(|(h, l)| (h, l)).collect();
        let (_, grad) = net.loss_and_grad(&batch)?;
        net.step(&mut opt, &grad)?;
    }
    Ok(())
}

/// Train the shared starting point on degradations drawn across all ranges.
pub fn pretrain_base(cfg: &DiscriminabilityConfig, train_pool: &HrPool) -> Result<SRNet<f32>> {
    validate(cfg)?;
    if train_pool.is_empty() {
        return Err(Error::invalid("empty training pool"));
    }
    let channels = train_pool.images[0].channels();
    let mut net = SRNet::new(channels, cfg.scale, cfg.init_seed)?;
    let stream = seed::derive(cfg.data_seed, &[seed::stream::TRAIN_BATCH, 0]);
    let mixed = |s: u64| {
        let mut rng = seed::rng(seed::derive(s, &[1]));
        let uniform = |rng: &mut rand_chacha::ChaCha8Rng, (lo, hi): (f64, f64)| {
            if lo < hi {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        Point {
            blur: uniform(&mut rng, cfg.blur_range),
            noise: uniform(&mut rng, cfg.noise_range),
            quality: rng.random_range(cfg.quality_range.0..=cfg.quality_range.1),
            factor: cfg.scale as f64,
        }
    };
    train(&mut net, cfg, train_pool, cfg.pretrain_iterations, cfg.learning_rate, stream, mixed)?;
    Ok(net)
}

fn level_validation(cfg: &DiscriminabilityConfig, val_pool: &HrPool, p: Point) -> Result<Vec<SamplePair>> {
    (0..cfg.val_count)
        .map(|j| {
            let src = &val_pool.images[j % val_pool.len()];
            let (h, w) = (src.height() / cfg.scale * cfg.scale, src.width() / cfg.scale * cfg.scale);
            let hr = src.crop(0, 0, h, w)?;
            let chain_seed = seed::derive(cfg.data_seed, &[seed::stream::VALIDATION, j as u64]);
            let lr = degrade(&hr, p, cfg.scale, chain_seed)?;
            Ok(SamplePair {
                hr,
                lr,
                config: DegradationConfig {
                    blur_sigma: p.blur,
                    noise_sigma: p.noise,
                    scale: cfg.scale,
                    jpeg_quality: p.quality,
                    ..Default::default()
                },
                chain_seed,
            })
        })
        .collect()
}

/// Fine-tune copies of `base` on each severity of `axis` and report the gains.
///
/// Every level sees the same HR crops in the same order; only the degradation
/// differs.
pub fn discriminability_with_base(
    base: &SRNet<f32>,
    cfg: &DiscriminabilityConfig,
    train_pool: &HrPool,
    val_pool: &HrPool,
    axis: OperatorAxis,
    severities: &[f64],
) -> Result<DiscriminabilityReport> {
    validate(cfg)?;
    if val_pool.is_empty() || train_pool.is_empty() {
        return Err(Error::invalid("empty HR pool"));
    }
    let metric = MetricConfig { border: 0, ssim: false };
    let stream = seed::derive(cfg.data_seed, &[seed::stream::TRAIN_BATCH, 1]);
    let levels = severities
        .iter()
        .map(|&severity| {
            let p = level_point(cfg, axis, severity);
            let val = level_validation(cfg, val_pool, p)?;
            let base_psnr = evaluate_pairs(base, &val, &metric)?.psnr;
            let mut net = base.clone();
            train(&mut net, cfg, train_pool, cfg.finetune_iterations, cfg.finetune_learning_rate, stream, |_| p)?;
            let tuned_psnr = evaluate_pairs(&net, &val, &metric)?.psnr;
            Ok(LevelOutcome {
                severity,
                base_psnr,
                tuned_psnr,
                improvement: tuned_psnr - base_psnr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gains: Vec<f64> = levels.iter().map(|l| l.improvement).collect();
    Ok(DiscriminabilityReport {
        axis,
        variance: population_variance(&gains),
        levels,
    })
}

/// Pretrain a base net, then sweep `levels` evenly spaced severities of `axis`.
pub fn operator_discriminability(
    cfg: &DiscriminabilityConfig,
    train_pool: &HrPool,
    val_pool: &HrPool,
    axis: OperatorAxis,
    levels: usize,
) -> Result<DiscriminabilityReport> {
    if levels == 0 {
        return Err(Error::invalid("at least one severity level is required"));
    }
    let base = pretrain_base(cfg, train_pool)?;
    discriminability_with_base(&base, cfg, train_pool, val_pool, axis, &severity_levels(cfg, axis, levels))
}

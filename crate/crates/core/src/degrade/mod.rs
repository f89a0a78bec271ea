//! Degradation operators and their sequential composition.

mod blur;
mod jpeg;
mod noise;
mod resize;

use std::fmt;
use std::str::FromStr;

pub use blur::{gaussian_blur, gaussian_kernel};
pub use jpeg::{jpeg_compress, quant_table, LUMA_QUANT};
pub use noise::add_gaussian_noise;
pub use resize::{cubic, resize, resize_to, Direction};

use crate::{seed, Error, ImagePlane, Result};

/// Reflect-101 border index (`dcb|abcd|cba`).
pub(crate) fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DegradeOp {
    Blur,
    Resize,
    Noise,
    Compress,
}

impl DegradeOp {
    const ALL: [DegradeOp; 4] = [
        DegradeOp::Blur,
        DegradeOp::Resize,
        DegradeOp::Noise,
        DegradeOp::Compress,
    ];

    fn name(self) -> &'static str {
        match self {
            DegradeOp::Blur => "blur",
            DegradeOp::Resize => "resize",
            DegradeOp::Noise => "noise",
            DegradeOp::Compress => "compress",
        }
    }
}

/// A permutation of the four operators, written `blur>resize>noise>compress`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct OperatorOrder([DegradeOp; 4]);

impl OperatorOrder {
    pub fn new(ops: [DegradeOp; 4]) -> Result<Self> {
        for op in DegradeOp::ALL {
            if !ops.contains(&op) {
                return Err(Error::invalid(format!("operator order misses {}", op.name())));
            }
        }
        Ok(OperatorOrder(ops))
    }

    pub fn ops(&self) -> [DegradeOp; 4] {
        self.0
    }

    /// All 24 permutations, default first.
    pub fn enumerate() -> Vec<OperatorOrder> {
        let mut out = vec![OperatorOrder::default()];
        let all = DegradeOp::ALL;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        if let Ok(o) = OperatorOrder::new([all[a], all[b], all[c], all[d]]) {
                            if !out.contains(&o) {
                                out.push(o);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

impl Default for OperatorOrder {
    fn default() -> Self {
        OperatorOrder(DegradeOp::ALL)
    }
}

impl fmt::Display for OperatorOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.0.iter().map(|o| o.name()).collect();
        f.write_str(&names.join(">"))
    }
}

impl FromStr for OperatorOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parsed: Vec<DegradeOp> = s
            .split('>')
            .map(|t| {
                DegradeOp::ALL
                    .into_iter()
                    .find(|o| o.name() == t.trim())
                    .ok_or_else(|| Error::invalid(format!("unknown operator `{t}`")))
            })
            .collect::<Result<_>>()?;
        let ops: [DegradeOp; 4] = parsed
            .try_into()
            .map_err(|_| Error::invalid(format!("operator order `{s}` needs 4 entries")))?;
        OperatorOrder::new(ops)
    }
}

impl TryFrom<String> for OperatorOrder {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<OperatorOrder> for String {
    fn from(o: OperatorOrder) -> String {
        o.to_string()
    }
}

/// One concrete point in degradation-parameter space.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DegradationConfig {
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    pub scale: usize,
    pub jpeg_quality: u8,
    #[serde(default)]
    pub order: OperatorOrder,
    #[serde(default = "one")]
    pub repeats: u8,
}

fn one() -> u8 {
    1
}

impl Default for DegradationConfig {
    fn default() -> Self {
        DegradationConfig {
            blur_sigma: 0.0,
            noise_sigma: 0.0,
            scale: 1,
            jpeg_quality: 100,
            order: OperatorOrder::default(),
            repeats: 1,
        }
    }
}

impl DegradationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::invalid(format!("blur_sigma {} out of range", self.blur_sigma)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid(format!("noise_sigma {} out of range", self.noise_sigma)));
        }
        if self.scale == 0 {
            return Err(Error::invalid("scale must be >= 1"));
        }
        if !(1..=100).contains(&self.jpeg_quality) {
            return Err(Error::invalid(format!("jpeg_quality {} out of range", self.jpeg_quality)));
        }
        if self.repeats != 1 && self.repeats != 2 {
            return Err(Error::invalid(format!("repeats must be 1 or 2, got {}", self.repeats)));
        }
        Ok(())
    }
}

fn run_pass(
    img: &ImagePlane,
    order: OperatorOrder,
    blur_sigma: f64,
    noise_sigma: f64,
    scale: usize,
    quality: u8,
    noise_seed: u64,
) -> Result<ImagePlane> {
    let mut cur = img.clone();
    for op in order.ops() {
        cur = match op {
            DegradeOp::Blur => gaussian_blur(&cur, blur_sigma)?,
            DegradeOp::Resize => resize(&cur, scale, Direction::Down)?,
            DegradeOp::Noise => add_gaussian_noise(&cur, noise_sigma, noise_seed)?,
            DegradeOp::Compress => jpeg_compress(&cur, quality)?,
        };
    }
    Ok(cur)
}

/// Apply the operator chain described by `cfg`.
///
/// The optional second pass uses half-strength blur and noise, no resize and
/// the same compression quality.
pub fn apply_chain(img: &ImagePlane, cfg: &DegradationConfig, seed: u64) -> Result<ImagePlane> {
    cfg.validate()?;
    if img.height() % cfg.scale != 0 || img.width() % cfg.scale != 0 {
        return Err(Error::invalid(format!(
            "{}x{} is not divisible by scale {}",
            img.height(),
            img.width(),
            cfg.scale
        )));
    }
    let mut out = run_pass(
        img,
        cfg.order,
        cfg.blur_sigma,
        cfg.noise_sigma,
        cfg.scale,
        cfg.jpeg_quality,
        seed::derive(seed, &[0]),
    )?;
    if cfg.repeats == 2 {
        out = run_pass(
            &out,
            cfg.order,
            0.5 * cfg.blur_sigma,
            0.5 * cfg.noise_sigma,
            1,
            cfg.jpeg_quality,
            seed::derive(seed, &[1]),
        )?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::img::psnr;
    use crate::pool::synthetic_image;
    use proptest::prelude::*;

    #[test]
    fn reflect101_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect101(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect101(-5, 1), 0);
        assert_eq!(reflect101(11, 3), 1);
    }

    #[test]
    fn order_parsing() {
        let d = OperatorOrder::default();
        assert_eq!(d.to_string(), "blur>resize>noise>compress");
        assert_eq!(d.to_string().parse::<OperatorOrder>().unwrap(), d);
        assert!("blur>blur>noise>compress".parse::<OperatorOrder>().is_err());
        assert!("blur>noise".parse::<OperatorOrder>().is_err());
        assert_eq!(OperatorOrder::enumerate().len(), 24);
    }

    #[test]
    fn identity_chain_is_near_lossless() {
        let img = synthetic_image(2, 32, 32);
        let out = apply_chain(&img, &DegradationConfig::default(), 0).unwrap();
        assert!(psnr(&out, &img).unwrap() > 45.0);
    }

    #[test]
    fn chain_shape_and_noise_ordering() {
        let img = synthetic_image(4, 48, 48);
        let cfg = DegradationConfig {
            scale: 2,
            blur_sigma: 0.8,
            jpeg_quality: 90,
            ..Default::default()
        };
        let clean = resize(&img, 2, Direction::Down).unwrap();
        let low = apply_chain(&img, &DegradationConfig { noise_sigma: 0.01, ..cfg }, 9).unwrap();
        let high = apply_chain(&img, &DegradationConfig { noise_sigma: 0.1, ..cfg }, 9).unwrap();
        assert_eq!(low.shape(), (24, 24, 3));
        assert!(psnr(&high, &clean).unwrap() < psnr(&low, &clean).unwrap());
    }

    #[test]
    fn second_pass_and_errors() {
        let img = synthetic_image(4, 32, 32);
        let cfg = DegradationConfig {
            blur_sigma: 1.0,
            noise_sigma: 0.02,
            scale: 2,
            jpeg_quality: 80,
            repeats: 2,
            ..Default::default()
        };
        let out = apply_chain(&img, &cfg, 3).unwrap();
        assert_eq!(out.shape(), (16, 16, 3));
        assert_eq!(out, apply_chain(&img, &cfg, 3).unwrap());
        let odd = ImagePlane::constant(15, 16, 1, 0.5).unwrap();
        assert!(apply_chain(&odd, &cfg, 3).is_err());
        assert!(apply_chain(&img, &DegradationConfig { repeats: 3, ..cfg }, 3).is_err());
        assert!(apply_chain(&img, &DegradationConfig { jpeg_quality: 0, ..cfg }, 3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn operators_stay_in_unit_range(
            data in proptest::collection::vec(-0.5f64..1.5, 16 * 16),
            blur in 0.0f64..3.0,
            noise in 0.0f64..0.3,
            q in 1u8..=100,
            seed in any::<u64>(),
        ) {
            let img = ImagePlane::new(16, 16, 1, data).unwrap();
            let cfg = DegradationConfig {
                blur_sigma: blur, noise_sigma: noise, scale: 2, jpeg_quality: q,
                ..Default::default()
            };
            let out = apply_chain(&img, &cfg, seed).unwrap();
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(&out, &apply_chain(&img, &cfg, seed).unwrap());
            let up = resize(&out, 2, Direction::Up).unwrap();
            prop_assert!(up.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

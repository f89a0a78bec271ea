use super::ImagePlane;
use crate::{Error, Result};

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Full-reference quality of one image against another, on luma.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
}

/// BT.601 full-range luma. One-channel input is returned unchanged.
pub fn to_luma(img: &ImagePlane) -> Result<ImagePlane> {
    match img.channels() {
        1 => Ok(img.clone()),
        3 => {
            let (r, g, b) = (img.channel(0), img.channel(1), img.channel(2));
            let y = r
                .iter()
                .zip(g)
                .zip(b)
                .map(|((&r, &g), &b)| 0.299 * r + 0.587 * g + 0.114 * b)
                .collect();
            Ok(ImagePlane::from_raw_clamped(img.height(), img.width(), 1, y))
        }
        c => Err(Error::invalid(format!("to_luma expects 1 or 3 channels, got {c}"))),
    }
}

fn check_shapes(a: &ImagePlane, b: &ImagePlane) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean squared error over luma samples.
pub fn mse(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    check_shapes(a, b)?;
    let (ya, yb) = (to_luma(a)?, to_luma(b)?);
    let sum: f64 = ya
        .data()
        .iter()
        .zip(yb.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / ya.data().len() as f64)
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse > 0.0 {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    } else {
        PSNR_CAP
    }
}

/// Luma PSNR in dB, capped at [`PSNR_CAP`].
pub fn psnr(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    mse(a, b).map(psnr_from_mse)
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable "valid" filtering with the SSIM window.
fn filter_valid(src: &[f64], h: usize, w: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = win.iter().zip(&line[x..]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = win
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * rows[(y + k) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM on luma with an 11x11 Gaussian window (sigma 1.5), no downsampling.
pub fn ssim(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    check_shapes(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let (ya, yb) = (to_luma(a)?, to_luma(b)?);
    let (xa, xb) = (ya.data(), yb.data());
    let win = gaussian_window();
    let sq = |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(p, q)| p * q).collect() };

    let mu_a = filter_valid(xa, h, w, &win);
    let mu_b = filter_valid(xb, h, w, &win);
    let e_aa = filter_valid(&sq(xa, xa), h, w, &win);
    let e_bb = filter_valid(&sq(xb, xb), h, w, &win);
    let e_ab = filter_valid(&sq(xa, xb), h, w, &win);

    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
        total += num / den;
    }
    Ok(total / n as f64)
}

/// PSNR, SSIM and MSE together. SSIM is NaN for images smaller than the window.
pub fn evaluate(a: &ImagePlane, b: &ImagePlane) -> Result<MetricReport> {
    let mse = mse(a, b)?;
    let ssim = if a.height() >= SSIM_WINDOW && a.width() >= SSIM_WINDOW {
        ssim(a, b)?
    } else {
        f64::NAN
    };
    Ok(MetricReport {
        psnr: psnr_from_mse(mse),
        ssim,
        mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::synthetic_image;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn gray(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> ImagePlane {
        ImagePlane::from_fn(h, w, 1, |_, y, x| f(y, x)).unwrap()
    }

    /// Direct 2-D window evaluation, no separability.
    fn ssim_brute(a: &ImagePlane, b: &ImagePlane) -> f64 {
        let win = gaussian_window();
        let (h, w) = (a.height(), a.width());
        let mut total = 0.0;
        let mut count = 0.0;
        for y0 in 0..=h - SSIM_WINDOW {
            for x0 in 0..=w - SSIM_WINDOW {
                let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let k = win[dy] * win[dx];
                        let p = a.get(0, y0 + dy, x0 + dx);
                        let q = b.get(0, y0 + dy, x0 + dx);
                        ma += k * p;
                        mb += k * q;
                        aa += k * p * p;
                        bb += k * q * q;
                        ab += k * p * q;
                    }
                }
                let (va, vb, cov) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
                total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
                count += 1.0;
            }
        }
        total / count
    }

    #[test]
    fn luma_weights() {
        let white = ImagePlane::constant(1, 1, 3, 1.0).unwrap();
        assert!((to_luma(&white).unwrap().get(0, 0, 0) - 1.0).abs() < 1e-12);
        let red = ImagePlane::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert!((to_luma(&red).unwrap().get(0, 0, 0) - 0.299).abs() < 1e-12);
        let g = gray(3, 3, |y, x| (y + x) as f64 / 4.0);
        assert_eq!(to_luma(&g).unwrap(), g);
        assert_eq!(to_luma(&to_luma(&g).unwrap()).unwrap(), g);
    }

    #[test]
    fn psnr_golden_values() {
        let a = gray(16, 16, |y, x| 0.2 + 0.5 * ((y * 16 + x) as f64 / 256.0));
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);

        let checker = gray(8, 8, |y, x| ((y + x) % 2) as f64);
        let half = ImagePlane::constant(8, 8, 1, 0.5).unwrap();
        // 10 log10(1 / 0.25)
        assert!((psnr(&checker, &half).unwrap() - 6.020599913279624).abs() < 1e-9);
    }

    #[test]
    fn psnr_rejects_shape_mismatch() {
        let a = ImagePlane::constant(4, 4, 1, 0.5).unwrap();
        let b = ImagePlane::constant(4, 5, 1, 0.5).unwrap();
        assert!(matches!(psnr(&a, &b), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn psnr_decreases_with_offset() {
        let a = gray(16, 16, |y, x| 0.3 + 0.01 * (y as f64) + 0.005 * x as f64);
        let vals: Vec<f64> = [0.01, 0.02, 0.04]
            .iter()
            .map(|e| psnr(&a, &a.map(|v| v + e)).unwrap())
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2]);
    }

    #[test]
    fn ssim_identity_and_constants() {
        let img = to_luma(&synthetic_image(3, 48, 48)).unwrap();
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-9);
        let c = ImagePlane::constant(16, 16, 1, 0.5).unwrap();
        assert!((ssim(&c, &c).unwrap() - 1.0).abs() < 1e-9);
        let tiny = ImagePlane::constant(10, 16, 1, 0.5).unwrap();
        assert!(ssim(&tiny, &tiny).is_err());
    }

    #[test]
    fn ssim_matches_brute_force_and_drops_on_shuffle() {
        let img = to_luma(&synthetic_image(11, 40, 40)).unwrap();
        let mut samples = img.data().to_vec();
        samples.shuffle(&mut crate::seed::rng(5));
        let shuffled = ImagePlane::new(40, 40, 1, samples).unwrap();
        let fast = ssim(&img, &shuffled).unwrap();
        let slow = ssim_brute(&img, &shuffled);
        assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
        assert!(fast < 0.5, "shuffled ssim {fast}");
    }

    proptest! {
        #[test]
        fn psnr_symmetric_and_ssim_bounded(
            a in proptest::collection::vec(0.0f64..1.0, 144),
            b in proptest::collection::vec(0.0f64..1.0, 144),
        ) {
            let a = ImagePlane::new(12, 12, 1, a).unwrap();
            let b = ImagePlane::new(12, 12, 1, b).unwrap();
            let d = psnr(&a, &b).unwrap() - psnr(&b, &a).unwrap();
            prop_assert!(d.abs() <= 1e-12);
            let s = ssim(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
            prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        }
    }
}

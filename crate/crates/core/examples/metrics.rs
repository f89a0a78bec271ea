//! Full-reference metrics on a procedural image and a few distortions of it.

use degrade_mt::degrade::{add_gaussian_noise, gaussian_blur, jpeg_compress};
use degrade_mt::img::{evaluate, to_luma};
use degrade_mt::pool::synthetic_image;

fn main() -> degrade_mt::Result<()> {
    let clean = synthetic_image(1, 96, 96);
    let offset = clean.map(|v| (v + 0.1).min(1.0));
    let cases = [
        ("identical", clean.clone()),
        ("offset +0.1", offset),
        ("blur 1.5", gaussian_blur(&clean, 1.5)?),
        ("noise 0.05", add_gaussian_noise(&clean, 0.05, 3)?),
        ("jpeg q=30", jpeg_compress(&clean, 30)?),
    ];
    println!("{:<12} {:>9} {:>8} {:>10}", "distortion", "PSNR", "SSIM", "MSE");
    for (name, img) in cases {
        let m = evaluate(&img, &clean)?;
        println!("{name:<12} {:>9.3} {:>8.4} {:>10.3e}", m.psnr, m.ssim, m.mse);
    }
    let y = to_luma(&clean)?;
    println!("luma plane: {}x{}x{}", y.height(), y.width(), y.channels());
    Ok(())
}

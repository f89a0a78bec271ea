//! Planar floating-point images, luma conversion and full-reference metrics.

mod io;
mod metrics;
mod plane;

pub use io::{read_image, write_image, write_png, write_pnm};
pub use metrics::{evaluate, mse, psnr, ssim, to_luma, MetricReport, PSNR_CAP};
pub use plane::ImagePlane;

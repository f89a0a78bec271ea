//! Multi-task real-world super-resolution at desk scale.
//!
//! Degradations are grouped into tasks by partitioning the (blur, noise)
//! parameter rectangle. A shared SR network is trained jointly on all tasks
//! while, at the start of every training interval, each task's validation
//! PSNR is compared against a frozen single-task reference. The PSNR gaps
//! become exponential task weights, and the weights become integer per-task
//! sample quotas for the interval: loss weighting is replaced by data
//! rebalancing.
//!
//! Module map:
//!
//! - [`img`]: image planes, luma, PSNR/SSIM, PNG and PNM files.
//! - [`degrade`]: blur, noise, bicubic resize, block-DCT compression and their chain.
//! - [`taskspace`]: subspace partitioning, config sampling, validation sets, batches.
//! - [`rebalance`]: PSNR distance, exponential weights, quotas, loss-equivalence oracle.
//! - [`sr_model`]: a small residual conv net with hand-written backprop and Adam.
//! - [`train`]: reference, uniform and rebalanced regimes plus the operator
//!   discriminability experiment.
//! - [`cli`]: experiment configuration and the commands behind the `degrade-mt` binary.

pub mod cli;
pub mod degrade;
mod error;
pub mod img;
pub mod pool;
pub mod rebalance;
pub mod seed;
pub mod sr_model;
pub mod taskspace;
pub mod train;

pub use error::{Error, Result};
pub use img::{ImagePlane, MetricReport, PSNR_CAP};

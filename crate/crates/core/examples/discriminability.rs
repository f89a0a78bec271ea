//! Per-operator severity sweep: how much does fine-tuning on one severity
//! level improve a net pretrained on mixed degradations?
//!
//! Usage: `cargo run --release --example discriminability [LEVELS]`

use degrade_mt::pool::HrPool;
use degrade_mt::train::{discriminability_with_base, pretrain_base, severity_levels, DiscriminabilityConfig, OperatorAxis};

fn main() -> degrade_mt::Result<()> {
    let levels: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let (train, val) = HrPool::synthetic(72, 96, 7).to_luma()?.split(8)?;
    let cfg = DiscriminabilityConfig::default();
    let base = pretrain_base(&cfg, &train)?;
    for axis in OperatorAxis::ALL {
        let sev = severity_levels(&cfg, axis, levels);
        let report = discriminability_with_base(&base, &cfg, &train, &val, axis, &sev)?;
        println!("{:<8} variance {:.5}", axis.name(), report.variance);
        for l in &report.levels {
            println!(
                "    severity {:>7.3}: base {:.3} dB -> tuned {:.3} dB ({:+.3})",
                l.severity, l.base_psnr, l.tuned_psnr, l.improvement
            );
        }
    }
    Ok(())
}

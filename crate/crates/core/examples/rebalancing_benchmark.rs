//! Desk-scale comparison of uniform and rebalanced joint training.
//!
//! Usage: `cargo run --release --example rebalancing_benchmark [SEEDS] [REFERENCE_ITERATIONS] [VAL_PAIRS]`

use std::time::Instant;

use degrade_mt::pool::HrPool;
use degrade_mt::seed;
use degrade_mt::taskspace::TaskSpaceConfig;
use degrade_mt::train::{train_multitask_rebalanced, train_multitask_uniform, train_references, TrainConfig};

fn main() -> degrade_mt::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let reference_iterations = std::env::args().nth(2).and_then(|s| s.parse().ok());
    let pool = HrPool::synthetic(72, 96, 7).to_luma()?;
    let (train, val) = pool.split(8)?;
    let mut ts_cfg = TaskSpaceConfig::default();
    if let Some(v) = std::env::args().nth(3).and_then(|s| s.parse().ok()) {
        ts_cfg.val_count = v;
    }
    let taskset = ts_cfg.build(&train, &val)?;
    for s in 0..seeds {
        let t0 = Instant::now();
        let mut cfg = TrainConfig {
            init_seed: seed::derive(0, &[seed::stream::INIT, s]),
            data_seed: seed::derive(0, &[s]),
            ..Default::default()
        };
        if let Some(r) = reference_iterations {
            cfg.reference_iterations = r;
        }
        let refs: Vec<f64> = train_references(&taskset, &cfg)?.into_iter().map(|(_, p)| p).collect();
        let (_, uni) = train_multitask_uniform(&taskset, &cfg)?;
        let (_, reb) = train_multitask_rebalanced(&taskset, &refs, &cfg)?;
        println!("seed {s} ({:.0} s)", t0.elapsed().as_secs_f64());
        for (i, name) in taskset.names().iter().enumerate() {
            println!(
                "  {name:>7}  ref {:6.3}  uniform {:6.3}  rebalanced {:6.3}",
                refs[i], uni.final_metrics[i].psnr, reb.final_metrics[i].psnr
            );
        }
        println!("  min      uniform {:6.3}  rebalanced {:6.3}", uni.min_psnr(), reb.min_psnr());
        for k in 0..cfg.intervals {
            let q: Vec<String> = reb.rows_for(k).map(|r| format!("{:4}({:+.2})", r.quota, r.distance.unwrap_or(0.0))).collect();
            println!("  k={k} {}", q.join(" "));
        }
    }
    Ok(())
}

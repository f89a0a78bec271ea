//! Drive the full pipeline through the library's command layer: synthesize
//! the validation data, run every regime and render the report.
//!
//! Usage: `cargo run --release --example run_experiment [OUT_DIR]`
//!
//! A shortened schedule keeps this to well under a minute.

use std::path::PathBuf;

use degrade_mt::cli::{cmd_report, cmd_run, cmd_synth, ExperimentConfig};

fn main() -> degrade_mt::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "run_experiment_out".into()));
    let mut cfg = ExperimentConfig::default();
    cfg.paths.out_dir = out.join("run");
    cfg.data.synthetic_count = 24;
    cfg.train.intervals = 4;
    cfg.train.iterations_per_interval = 25;
    cfg.train.samples_per_interval = 200;
    cfg.train.reference_iterations = 25;

    let rows = cmd_synth(&cfg, &out.join("synth"))?;
    println!("synthesized {} validation pairs", rows.len());
    for o in cmd_run(&cfg)? {
        println!("seed {}: references {:?}", o.index, o.references.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>());
        println!("  uniform min {:.3} dB, rebalanced min {:.3} dB", o.uniform.min_psnr(), o.rebalanced.min_psnr());
    }
    for p in cmd_report(&cfg.paths.out_dir)? {
        println!("wrote {}", p.display());
    }
    print!("{}", std::fs::read_to_string(cfg.paths.out_dir.join("summary.txt")).unwrap_or_default());
    Ok(())
}

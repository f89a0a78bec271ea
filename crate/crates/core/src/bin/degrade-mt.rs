use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use degrade_mt::cli::{self, ExperimentConfig};

#[derive(Parser)]
#[command(version, about = "Multi-task super-resolution with PSNR-distance data rebalancing")]
struct Args {
    /// Experiment config (TOML). Missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Number of seeded runs.
    #[arg(long, global = true)]
    seeds: Option<u64>,
    /// Output directory (the run directory for `report`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Super-resolution factor.
    #[arg(long, global = true)]
    scale: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write every task's validation pairs and a manifest.
    Synth,
    /// Train references, the uniform baseline and the rebalanced run.
    Run,
    /// Plot and tabulate the records of a finished run.
    Report,
    /// Check network gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        probes: usize,
    },
    /// Check the loss-equivalence identity on random instances.
    Oracle {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
    },
}

fn load(args: &Args) -> degrade_mt::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = args.seeds {
        cfg.seed.count = n;
    }
    if let Some(dir) = &args.out {
        cfg.paths.out_dir = dir.clone();
    }
    if let Some(s) = args.scale {
        cfg.taskspace.scale = s;
    }
    Ok(cfg)
}

fn run(args: Args) -> degrade_mt::Result<bool> {
    cli::init_threads()?;
    let cfg = load(&args)?;
    match args.command {
        Command::Synth => {
            let rows = cli::cmd_synth(&cfg, &cfg.paths.out_dir)?;
            println!("wrote {} pairs to {}", rows.len(), cfg.paths.out_dir.display());
        }
        Command::Run => {
            let outcomes = cli::cmd_run(&cfg)?;
            for o in &outcomes {
                println!(
                    "seed {}: min PSNR uniform {:.3} dB, rebalanced {:.3} dB",
                    o.index,
                    o.uniform.min_psnr(),
                    o.rebalanced.min_psnr()
                );
            }
            println!("summary: {}", cfg.paths.out_dir.join("summary.txt").display());
        }
        Command::Report => {
            for p in cli::cmd_report(&cfg.paths.out_dir)? {
                println!("{}", p.display());
            }
        }
        Command::Gradcheck { probes } => {
            let (f32_report, f64_report) = cli::cmd_gradcheck(cfg.seed.base, probes)?;
            let ok32 = f32_report.max_rel_err() < 1e-4;
            let ok64 = f64_report.max_rel_err() < 1e-7;
            println!("f32 max rel err {:.3e} ({})", f32_report.max_rel_err(), if ok32 { "ok" } else { "FAIL" });
            println!("f64 max rel err {:.3e} ({})", f64_report.max_rel_err(), if ok64 { "ok" } else { "FAIL" });
            return Ok(ok32 && ok64);
        }
        Command::Oracle { instances } => {
            let s = cli::cmd_oracle(instances, cfg.seed.base)?;
            let ok = s.max_rel_err < 1e-12;
            println!("{} instances, max rel err {:.3e} ({})", s.instances, s.max_rel_err, if ok { "ok" } else { "FAIL" });
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

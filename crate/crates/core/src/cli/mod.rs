//! Experiment configuration and the commands behind the `degrade-mt` binary.
//!
//! Each command is a function of the configuration and files on disk, so the
//! binary only parses arguments and prints.

mod config;
pub mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::img::write_png;
use crate::rebalance::equivalence_oracle;
use crate::sr_model::gradcheck::{check_f32, check_f64, GradCheckReport};
use crate::sr_model::save_checkpoint;
use crate::train::{train_multitask_rebalanced, train_multitask_uniform, train_references, RunRecord};
use crate::{seed, Error, Result};

pub use config::{DataConfig, ExperimentConfig, PathsConfig, SeedConfig};
use svg::{line_chart, Series};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "DEGRADE_MT_THREADS";

/// Size the global worker pool from [`THREADS_ENV`], if set.
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One validation pair written by [`cmd_synth`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub task: usize,
    pub task_name: String,
    pub pair: usize,
    pub hr_file: String,
    pub lr_file: String,
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    pub scale: usize,
    pub jpeg_quality: u8,
    pub order: String,
    pub repeats: u8,
    pub chain_seed: u64,
}

/// Write every task's frozen validation pairs as PNG files plus `manifest.csv`
/// and the task-space description `taskset.toml`.
pub fn cmd_synth(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<ManifestRow>> {
    let (train, val) = cfg.pools()?;
    let taskset = cfg.taskspace.build(&train, &val)?;
    create_dir(out_dir)?;
    let mut rows = Vec::new();
    for task in &taskset.tasks {
        let dir = out_dir.join(task.name());
        create_dir(&dir)?;
        for (j, p) in task.val_pairs().iter().enumerate() {
            let hr_file = format!("{}/{j:03}_hr.png", task.name());
            let lr_file = format!("{}/{j:03}_lr.png", task.name());
            write_png(&p.hr, &out_dir.join(&hr_file))?;
            write_png(&p.lr, &out_dir.join(&lr_file))?;
            rows.push(ManifestRow {
                task: task.id,
                task_name: task.name().to_string(),
                pair: j,
                hr_file,
                lr_file,
                blur_sigma: p.config.blur_sigma,
                noise_sigma: p.config.noise_sigma,
                scale: p.config.scale,
                jpeg_quality: p.config.jpeg_quality,
                order: p.config.order.to_string(),
                repeats: p.config.repeats,
                chain_seed: p.chain_seed,
            });
        }
    }
    let manifest = out_dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    write_text(&out_dir.join("taskset.toml"), &cfg.taskspace.to_toml())?;
    Ok(rows)
}

/// Results of one seeded run of all three regimes.
#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub index: u64,
    pub dir: PathBuf,
    pub task_names: Vec<String>,
    pub references: Vec<f64>,
    pub uniform: RunRecord,
    pub rebalanced: RunRecord,
}

fn run_seed(cfg: &ExperimentConfig, taskset: &crate::taskspace::TaskSet, index: u64, out: &Path) -> Result<SeedOutcome> {
    let tc = cfg.train_config(index);
    let dir = out.join(format!("seed_{index}"));
    create_dir(&dir)?;

    log::info!("seed {index}: training {} references", taskset.len());
    let refs = train_references(taskset, &tc).map_err(Error::stage("reference training"))?;
    let ref_nets: Vec<_> = refs.iter().map(|(n, _)| n).collect();
    save_checkpoint(&dir.join("reference.ckpt"), &ref_nets).map_err(Error::stage("reference checkpoint"))?;
    let references: Vec<f64> = refs.iter().map(|r| r.1).collect();

    log::info!("seed {index}: uniform baseline");
    let (net, mut uniform) = train_multitask_uniform(taskset, &tc).map_err(Error::stage("uniform training"))?;
    uniform.attach_references(&references);
    save_checkpoint(&dir.join("uniform.ckpt"), &[&net]).map_err(Error::stage("uniform checkpoint"))?;
    uniform.write_csv(&dir).map_err(Error::stage("uniform record"))?;

    log::info!("seed {index}: rebalanced run");
    let (net, rebalanced) =
        train_multitask_rebalanced(taskset, &references, &tc).map_err(Error::stage("rebalanced training"))?;
    save_checkpoint(&dir.join("rebalanced.ckpt"), &[&net]).map_err(Error::stage("rebalanced checkpoint"))?;
    rebalanced.write_csv(&dir).map_err(Error::stage("rebalanced record"))?;

    Ok(SeedOutcome {
        index,
        dir,
        task_names: taskset.names(),
        references,
        uniform,
        rebalanced,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn seed_table(o: &SeedOutcome) -> toml::Table {
    let mut t = toml::Table::new();
    t.insert("seed".into(), (o.index as i64).into());
    t.insert("uniform_min_psnr".into(), o.uniform.min_psnr().into());
    t.insert("rebalanced_min_psnr".into(), o.rebalanced.min_psnr().into());
    t.insert("delta_min_psnr".into(), (o.rebalanced.min_psnr() - o.uniform.min_psnr()).into());
    t.insert("uniform_mean_psnr".into(), o.uniform.mean_psnr().into());
    t.insert("rebalanced_mean_psnr".into(), o.rebalanced.mean_psnr().into());
    t.insert("delta_mean_psnr".into(), (o.rebalanced.mean_psnr() - o.uniform.mean_psnr()).into());
    for (i, name) in o.task_names.iter().enumerate() {
        let (u, r) = (&o.uniform.final_metrics[i], &o.rebalanced.final_metrics[i]);
        let mut task = toml::Table::new();
        task.insert("reference_psnr".into(), o.references[i].into());
        task.insert("uniform_psnr".into(), u.psnr.into());
        task.insert("uniform_ssim".into(), u.ssim.into());
        task.insert("rebalanced_psnr".into(), r.psnr.into());
        task.insert("rebalanced_ssim".into(), r.ssim.into());
        task.insert("delta_psnr".into(), (r.psnr - u.psnr).into());
        t.insert(name.clone(), task.into());
    }
    t
}

/// Key-value summary: one table per seed and, for several seeds, an
/// `aggregate` table of means and sample standard deviations.
pub fn summary_text(outcomes: &[SeedOutcome]) -> String {
    let mut root = toml::Table::new();
    for o in outcomes {
        root.insert(format!("seed_{}", o.index), seed_table(o).into());
    }
    if outcomes.len() > 1 {
        let mut agg = toml::Table::new();
        agg.insert("seeds".into(), (outcomes.len() as i64).into());
        let mut put = |key: &str, values: Vec<f64>| {
            let (m, s) = mean_std(&values);
            agg.insert(format!("{key}_mean"), m.into());
            agg.insert(format!("{key}_std"), s.into());
        };
        put("uniform_min_psnr", outcomes.iter().map(|o| o.uniform.min_psnr()).collect());
        put("rebalanced_min_psnr", outcomes.iter().map(|o| o.rebalanced.min_psnr()).collect());
        put("uniform_mean_psnr", outcomes.iter().map(|o| o.uniform.mean_psnr()).collect());
        put("rebalanced_mean_psnr", outcomes.iter().map(|o| o.rebalanced.mean_psnr()).collect());
        for (i, name) in outcomes[0].task_names.iter().enumerate() {
            put(&format!("{name}_uniform_psnr"), outcomes.iter().map(|o| o.uniform.final_metrics[i].psnr).collect());
            put(
                &format!("{name}_rebalanced_psnr"),
                outcomes.iter().map(|o| o.rebalanced.final_metrics[i].psnr).collect(),
            );
        }
        root.insert("aggregate".into(), agg.into());
    }
    toml::to_string(&root).expect("summary serializes")
}

/// Reference training, uniform baseline and rebalanced run for every seed.
/// Writes checkpoints and records under `seed_<i>/` and `summary.txt` at the top.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<SeedOutcome>> {
    let out = &cfg.paths.out_dir;
    create_dir(out)?;
    let (train, val) = cfg.pools().map_err(Error::stage("loading HR images"))?;
    let taskset = cfg.taskspace.build(&train, &val).map_err(Error::stage("building tasks"))?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    let outcomes = (0..cfg.seed.count)
        .map(|i| run_seed(cfg, &taskset, i, out))
        .collect::<Result<Vec<_>>>()?;
    write_text(&out.join("summary.txt"), &summary_text(&outcomes))?;
    Ok(outcomes)
}

const REGIMES: [&str; 2] = ["uniform", "rebalanced"];

fn has_records(dir: &Path) -> bool {
    REGIMES.iter().any(|r| RunRecord::rows_path(dir, r).exists())
}

/// Directories holding records: `run_dir` itself or its `seed_*` children.
fn record_dirs(run_dir: &Path) -> Result<Vec<PathBuf>> {
    if !run_dir.is_dir() {
        return Err(Error::invalid(format!("{} is not a directory", run_dir.display())));
    }
    if has_records(run_dir) {
        return Ok(vec![run_dir.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(run_dir)
        .map_err(|e| Error::io(run_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && has_records(p))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::invalid(format!("no run record CSVs under {}", run_dir.display())));
    }
    Ok(dirs)
}

fn trajectories(rec: &RunRecord, value: impl Fn(&crate::train::RunRow) -> Option<f64>) -> Vec<Series> {
    let n = rec.final_metrics.len();
    (0..n)
        .map(|t| Series {
            name: rec.final_metrics[t].task_name.clone(),
            points: rec
                .rows
                .iter()
                .filter(|r| r.task == t)
                .filter_map(|r| value(r).map(|v| (r.interval as f64, v)))
                .collect(),
        })
        .collect()
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.prec$}"))
}

fn record_table(rec: &RunRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "regime: {}", rec.regime);
    let _ = writeln!(
        out,
        "{:>8} {:>10} {:>10} {:>10} {:>10} {:>8} {:>6} {:>10} {:>8}",
        "interval", "task", "psnr_ref", "psnr_multi", "distance", "weight", "quota", "post_psnr", "post_ssim"
    );
    for r in &rec.rows {
        let _ = writeln!(
            out,
            "{:>8} {:>10} {:>10} {:>10} {:>10} {:>8.4} {:>6} {:>10} {:>8}",
            r.interval,
            r.task_name,
            fmt_opt(r.psnr_single, 3),
            fmt_opt(r.psnr_multi, 3),
            fmt_opt(r.distance, 3),
            r.weight,
            r.quota,
            fmt_opt(r.post_psnr, 3),
            fmt_opt(r.post_ssim, 4),
        );
    }
    let _ = writeln!(out, "final:");
    for m in &rec.final_metrics {
        let _ = writeln!(out, "{:>19} {:>10.3} {:>10.4}", m.task_name, m.psnr, m.ssim);
    }
    let _ = writeln!(out, "{:>19} {:>10.3}", "min", rec.min_psnr());
    let _ = writeln!(out, "{:>19} {:>10.3}", "mean", rec.mean_psnr());
    out
}

/// Render every record found under `run_dir`: weight, quota and PSNR
/// trajectories as SVG plus `report.txt`. Returns the files written.
pub fn cmd_report(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for dir in record_dirs(run_dir)? {
        let mut table = String::new();
        for regime in REGIMES {
            if !RunRecord::rows_path(&dir, regime).exists() {
                continue;
            }
            let rec = RunRecord::read_csv(&dir, regime)?;
            let charts = [
                ("weights", "task weight", trajectories(&rec, |r| Some(r.weight))),
                ("quotas", "samples per interval", trajectories(&rec, |r| Some(r.quota as f64))),
                ("psnr", "validation PSNR after interval (dB)", trajectories(&rec, |r| r.post_psnr)),
            ];
            for (kind, y_label, series) in charts {
                let path = dir.join(format!("{regime}_{kind}.svg"));
                write_text(&path, &line_chart(&format!("{regime}: {kind}"), "interval", y_label, &series))?;
                written.push(path);
            }
            table.push_str(&record_table(&rec));
            table.push('\n');
        }
        let path = dir.join("report.txt");
        write_text(&path, &table)?;
        written.push(path);
    }
    Ok(written)
}

/// Finite-difference check of both precisions.
pub fn cmd_gradcheck(seed_value: u64, probes: usize) -> Result<(GradCheckReport, GradCheckReport)> {
    Ok((check_f32(seed_value, probes)?, check_f64(seed_value, probes)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleSummary {
    pub instances: usize,
    pub max_rel_err: f64,
}

/// Random task-loss instances through the loss-equivalence oracle.
pub fn cmd_oracle(instances: usize, seed_value: u64) -> Result<OracleSummary> {
    let mut rng = seed::rng(seed_value);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(2..=8);
        let losses: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let m = rng.random_range(1..=50);
                (0..m).map(|_| rng.random_range(0.0..1.0)).collect()
            })
            .collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(1e-3..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let (a, b) = equivalence_oracle(&losses, &weights)?;
        worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE));
    }
    Ok(OracleSummary {
        instances,
        max_rel_err: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_command_agrees() {
        let s = cmd_oracle(200, 3).unwrap();
        assert_eq!(s.instances, 200);
        assert!(s.max_rel_err < 1e-12);
    }

    #[test]
    fn report_without_records_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert!(cmd_report(dir.path()).is_err());
        assert!(cmd_report(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn std_is_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}

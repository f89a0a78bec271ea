//! Training regimes: single-task references, the uniform multi-task baseline
//! and the rebalanced multi-task run, plus the operator discriminability
//! experiment.
//!
//! Every regime uses the same loop. Training is split into intervals. At the
//! start of each interval every task is evaluated and each task gets an integer
//! sample quota. Fresh pairs are synthesized per task, pooled and shuffled,
//! and then consumed in fixed-size batches. The loop is sequential and fully
//! determined by the seeds. Only validation and batch synthesis run in
//! parallel, and their results are gathered in task order.

mod discriminability;
mod record;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::img::{psnr, ssim};
use crate::rebalance::{default_floor, plan_interval, IntervalPlan, TaskSnapshot};
use crate::sr_model::{load_checkpoint, OptimState, SRNet};
use crate::taskspace::{make_training_batch, SamplePair, Task, TaskSet};
use crate::{seed, Error, ImagePlane, Result};

pub use discriminability::{
    discriminability_with_base, operator_discriminability, population_variance, pretrain_base, severity_levels,
    DiscriminabilityConfig, DiscriminabilityReport, LevelOutcome, OperatorAxis,
};
pub use record::{FinalMetric, RunRecord, RunRow};

/// Learning-rate schedule over the whole run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from the base rate to `final_ratio` times it.
    Cosine { final_ratio: f64 },
}

impl LrSchedule {
    /// Rate for iteration `t` of `total`.
    pub fn rate(&self, base: f64, t: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine { final_ratio } => {
                let progress = if total <= 1 { 0.0 } else { t as f64 / (total - 1) as f64 };
                let c = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
                base * (final_ratio + (1.0 - final_ratio) * c)
            }
        }
    }
}

/// How validation pairs are scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Pixels shaved from every side before scoring.
    pub border: usize,
    /// Compute SSIM alongside PSNR.
    pub ssim: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { border: 0, ssim: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub intervals: usize,
    pub iterations_per_interval: usize,
    pub batch_size: usize,
    /// Fresh samples synthesized per interval; must equal iterations times batch size.
    pub samples_per_interval: usize,
    /// HR crop size of a training sample.
    pub patch: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    /// Distances are clamped to this many dB before exponentiation.
    pub clip_db: f64,
    /// Per-task quota floor; defaults to 1% of the interval's samples (at least 1).
    pub floor_min: Option<usize>,
    /// Evaluate and re-plan every this many intervals. In between, the last
    /// plan is reused and the row's metrics are left empty.
    pub eval_every: usize,
    /// Training budget of each single-task reference. The default is the
    /// per-task share of the shared run at four tasks.
    pub reference_iterations: usize,
    /// Start every network from the first net of this checkpoint instead of
    /// from scratch.
    pub warm_start: Option<PathBuf>,
    #[serde(skip)]
    pub init_seed: u64,
    #[serde(skip)]
    pub data_seed: u64,
    #[serde(skip)]
    pub metric: MetricConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            intervals: 8,
            iterations_per_interval: 200,
            batch_size: 8,
            samples_per_interval: 1600,
            patch: 48,
            learning_rate: 2e-3,
            lr_schedule: LrSchedule::Cosine { final_ratio: 0.1 },
            clip_db: 1.0,
            floor_min: None,
            eval_every: 1,
            reference_iterations: 400,
            warm_start: None,
            init_seed: 1,
            data_seed: 2,
            metric: MetricConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn floor(&self) -> usize {
        self.floor_min.unwrap_or_else(|| default_floor(self.samples_per_interval))
    }

    /// Iterations the shared net gets per task on average.
    pub fn per_task_share(&self, n_tasks: usize) -> usize {
        self.intervals * self.iterations_per_interval / n_tasks.max(1)
    }

    pub fn validate(&self, n_tasks: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.intervals == 0 {
            return bad("intervals must be >= 1".into());
        }
        if self.iterations_per_interval == 0 || self.batch_size == 0 {
            return bad("iterations_per_interval and batch_size must be >= 1".into());
        }
        if self.samples_per_interval != self.iterations_per_interval * self.batch_size {
            return bad(format!(
                "samples_per_interval {} must equal iterations_per_interval x batch_size = {}",
                self.samples_per_interval,
                self.iterations_per_interval * self.batch_size
            ));
        }
        if self.samples_per_interval < n_tasks * self.floor() {
            return bad(format!(
                "samples_per_interval {} cannot give {n_tasks} tasks a floor of {}",
                self.samples_per_interval,
                self.floor()
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if let LrSchedule::Cosine { final_ratio } = self.lr_schedule {
            if !(0.0..=1.0).contains(&final_ratio) {
                return bad(format!("cosine final_ratio {final_ratio} must lie in [0, 1]"));
            }
        }
        if !(self.clip_db > 0.0) {
            return bad(format!("clip_db {} must be positive", self.clip_db));
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1".into());
        }
        if self.patch < 16 {
            return bad(format!("patch {} is too small", self.patch));
        }
        Ok(())
    }
}

/// Validation score of one task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskScore {
    pub psnr: f64,
    pub ssim: f64,
}

fn shave(img: &ImagePlane, border: usize) -> Result<ImagePlane> {
    if border == 0 {
        return Ok(img.clone());
    }
    if img.height() <= 2 * border || img.width() <= 2 * border {
        return Err(Error::invalid(format!("border {border} consumes the whole image")));
    }
    img.crop(border, border, img.height() - 2 * border, img.width() - 2 * border)
}

/// Mean PSNR and SSIM of `net` over a set of pairs.
pub fn evaluate_pairs(net: &SRNet<f32>, pairs: &[SamplePair], metric: &MetricConfig) -> Result<TaskScore> {
    if pairs.is_empty() {
        return Err(Error::invalid("no validation pairs"));
    }
    let scores = pairs
        .par_iter()
        .map(|p| {
            let sr = shave(&net.forward(&p.lr)?, metric.border)?;
            let hr = shave(&p.hr, metric.border)?;
            let s = if metric.ssim { ssim(&sr, &hr)? } else { f64::NAN };
            Ok((psnr(&sr, &hr)?, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = scores.len() as f64;
    Ok(TaskScore {
        psnr: scores.iter().map(|s| s.0).sum::<f64>() / n,
        ssim: scores.iter().map(|s| s.1).sum::<f64>() / n,
    })
}

pub fn evaluate_task(net: &SRNet<f32>, task: &Task, metric: &MetricConfig) -> Result<TaskScore> {
    evaluate_pairs(net, task.val_pairs(), metric)
}

fn evaluate_all(net: &SRNet<f32>, taskset: &TaskSet, metric: &MetricConfig) -> Result<Vec<TaskScore>> {
    taskset.tasks.iter().map(|t| evaluate_task(net, t, metric)).collect()
}

fn channels_of(task: &Task) -> usize {
    task.val_pairs().first().map_or(1, |p| p.hr.channels())
}

fn initial_net(channels: usize, scale: usize, init_seed: u64, cfg: &TrainConfig) -> Result<SRNet<f32>> {
    match &cfg.warm_start {
        None => SRNet::new(channels, scale, init_seed),
        Some(path) => {
            let net = load_checkpoint(path)?
                .into_iter()
                .next()
                .ok_or_else(|| Error::invalid(format!("{} holds no network", path.display())))?;
            if net.channels != channels {
                return Err(Error::invalid(format!(
                    "warm-start net has {} channels, data has {channels}",
                    net.channels
                )));
            }
            Ok(net.with_scale(scale))
        }
    }
}

/// Shared state of one optimization run.
struct Optimizer<'a> {
    net: SRNet<f32>,
    opt: OptimState,
    cfg: &'a TrainConfig,
    iteration: usize,
    total_iterations: usize,
}

impl<'a> Optimizer<'a> {
    fn new(net: SRNet<f32>, cfg: &'a TrainConfig, total_iterations: usize) -> Self {
        let opt = OptimState::new(net.param_count(), cfg.learning_rate);
        Optimizer { net, opt, cfg, iteration: 0, total_iterations }
    }

    /// Consume `pool` in shuffled batches of the configured size.
    fn train_on(&mut self, pool: &[SamplePair], shuffle_seed: u64) -> Result<()> {
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut seed::rng(shuffle_seed));
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<(&ImagePlane, &ImagePlane)> = chunk.iter().map(|&i| (&pool[i].hr, &pool[i].lr)).collect();
            let (_, grad) = self.net.loss_and_grad(&batch)?;
            self.opt.lr = self
                .cfg
                .lr_schedule
                .rate(self.cfg.learning_rate, self.iteration, self.total_iterations);
            self.net.step(&mut self.opt, &grad)?;
            self.iteration += 1;
        }
        Ok(())
    }
}

/// Train a fresh network on one task for `cfg.reference_iterations`
/// iterations and return it with its validation PSNR.
pub fn train_single_task(task: &Task, cfg: &TrainConfig) -> Result<(SRNet<f32>, f64)> {
    cfg.validate(1)?;
    let init_seed = seed::derive(cfg.init_seed, &[seed::stream::REFERENCE, task.id as u64]);
    let net = initial_net(channels_of(task), task.subspace.fixed_scale, init_seed, cfg)?;
    let mut run = Optimizer::new(net, cfg, cfg.reference_iterations);
    let stream = seed::derive(cfg.data_seed, &[seed::stream::REFERENCE]);
    let mut remaining = cfg.reference_iterations;
    let mut chunk = 0;
    while remaining > 0 {
        let iters = remaining.min(cfg.iterations_per_interval);
        let pool = make_training_batch(task, iters * cfg.batch_size, chunk, cfg.patch, stream)?;
        run.train_on(&pool, seed::derive(stream, &[seed::stream::SHUFFLE, task.id as u64, chunk as u64]))?;
        remaining -= iters;
        chunk += 1;
    }
    let score = evaluate_task(&run.net, task, &cfg.metric)?;
    Ok((run.net, score.psnr))
}

/// References for every task, in task order.
pub fn train_references(taskset: &TaskSet, cfg: &TrainConfig) -> Result<Vec<(SRNet<f32>, f64)>> {
    taskset.tasks.iter().map(|t| train_single_task(t, cfg)).collect()
}

enum Policy<'a> {
    Uniform,
    Rebalanced(&'a [f64]),
}

/// Fresh samples for one interval, concatenated in task order.
fn interval_pool(taskset: &TaskSet, quotas: &[usize], interval: usize, cfg: &TrainConfig) -> Result<Vec<SamplePair>> {
    let stream = seed::derive(cfg.data_seed, &[seed::stream::TRAIN_BATCH]);
    let parts = taskset
        .tasks
        .par_iter()
        .zip(quotas)
        .map(|(task, &q)| make_training_batch(task, q, interval, cfg.patch, stream))
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

fn run_multitask(taskset: &TaskSet, cfg: &TrainConfig, policy: Policy, regime: &str) -> Result<(SRNet<f32>, RunRecord)> {
    let n = taskset.len();
    cfg.validate(n)?;
    if let Policy::Rebalanced(refs) = policy {
        if refs.len() != n {
            return Err(Error::invalid(format!("{} reference PSNRs for {n} tasks", refs.len())));
        }
    }
    let first = &taskset.tasks[0];
    let init_seed = seed::derive(cfg.init_seed, &[seed::stream::INIT]);
    let net = initial_net(channels_of(first), first.subspace.fixed_scale, init_seed, cfg)?;
    let total_iterations = cfg.intervals * cfg.iterations_per_interval;
    let mut run = Optimizer::new(net, cfg, total_iterations);
    let floor = cfg.floor();
    let total = cfg.samples_per_interval;

    let mut scores = Some(evaluate_all(&run.net, taskset, &cfg.metric)?);
    let mut plan: Option<IntervalPlan> = None;
    let mut rows = Vec::with_capacity(cfg.intervals * n);
    for k in 0..cfg.intervals {
        let start = scores.take();
        if start.is_some() || plan.is_none() {
            plan = Some(match (&policy, &start) {
                (Policy::Rebalanced(refs), Some(s)) => {
                    let snaps = (0..n)
                        .map(|i| TaskSnapshot::new(i, refs[i], s[i].psnr))
                        .collect::<Result<Vec<_>>>()?;
                    plan_interval(k, &snaps, total, cfg.clip_db, floor)?
                }
                _ => IntervalPlan::uniform(k, n, total, floor)?,
            });
        }
        let p = plan.as_ref().expect("plan set above");
        let pool = interval_pool(taskset, &p.quotas, k, cfg)?;
        debug_assert_eq!(pool.len(), total);
        run.train_on(&pool, seed::derive(cfg.data_seed, &[seed::stream::SHUFFLE, k as u64]))?;

        let last = k + 1 == cfg.intervals;
        if last || (k + 1) % cfg.eval_every == 0 {
            scores = Some(evaluate_all(&run.net, taskset, &cfg.metric)?);
        }
        for (i, task) in taskset.tasks.iter().enumerate() {
            let psnr_single = match policy {
                Policy::Rebalanced(refs) => Some(refs[i]),
                Policy::Uniform => None,
            };
            let psnr_multi = start.as_ref().map(|s| s[i].psnr);
            rows.push(RunRow {
                interval: k,
                task: i,
                task_name: task.name().to_string(),
                psnr_single,
                psnr_multi,
                distance: psnr_single.zip(psnr_multi).map(|(a, b)| a - b),
                weight: p.weights[i],
                quota: p.quotas[i],
                post_psnr: scores.as_ref().map(|s| s[i].psnr),
                post_ssim: scores.as_ref().map(|s| s[i].ssim),
            });
        }
    }
    let finals = scores.expect("the last interval is always evaluated");
    let final_metrics = taskset
        .tasks
        .iter()
        .zip(&finals)
        .map(|(t, s)| FinalMetric {
            task: t.id,
            task_name: t.name().to_string(),
            psnr: s.psnr,
            ssim: s.ssim,
        })
        .collect();
    let record = RunRecord {
        regime: regime.to_string(),
        rows,
        final_metrics,
    };
    Ok((run.net, record))
}

/// Joint training with equal quotas every interval.
pub fn train_multitask_uniform(taskset: &TaskSet, cfg: &TrainConfig) -> Result<(SRNet<f32>, RunRecord)> {
    run_multitask(taskset, cfg, Policy::Uniform, "uniform")
}

/// Joint training whose quotas follow the PSNR distance to each task's
/// reference, recomputed at the start of every evaluated interval.
pub fn train_multitask_rebalanced(
    taskset: &TaskSet,
    references: &[f64],
    cfg: &TrainConfig,
) -> Result<(SRNet<f32>, RunRecord)> {
    run_multitask(taskset, cfg, Policy::Rebalanced(references), "rebalanced")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::HrPool;
    use crate::sr_model::param_checksum;
    use crate::taskspace::TaskSpaceConfig;

    fn small_taskset() -> TaskSet {
        let pool = HrPool::synthetic(10, 40, 5).to_luma().unwrap();
        let (train, val) = pool.split(7).unwrap();
        let ts = TaskSpaceConfig { val_count: 2, ..Default::default() };
        ts.build(&train, &val).unwrap()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            intervals: 3,
            iterations_per_interval: 4,
            batch_size: 4,
            samples_per_interval: 16,
            patch: 24,
            reference_iterations: 6,
            ..Default::default()
        }
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let s = LrSchedule::Cosine { final_ratio: 0.1 };
        assert_eq!(s.rate(1.0, 0, 11), 1.0);
        assert!((s.rate(1.0, 10, 11) - 0.1).abs() < 1e-15);
        assert!((s.rate(1.0, 5, 11) - 0.55).abs() < 1e-12);
        assert_eq!(LrSchedule::Constant.rate(0.3, 7, 11), 0.3);
    }

    #[test]
    fn config_invariants_are_checked() {
        let cfg = TrainConfig::default();
        cfg.validate(4).unwrap();
        assert_eq!(cfg.per_task_share(4), cfg.reference_iterations);
        assert!(TrainConfig { intervals: 0, ..cfg.clone() }.validate(4).is_err());
        assert!(TrainConfig { samples_per_interval: 1000, ..cfg.clone() }.validate(4).is_err());
        let c = TrainConfig {
            iterations_per_interval: 1,
            batch_size: 4,
            samples_per_interval: 4,
            floor_min: Some(2),
            ..cfg
        };
        assert!(c.validate(4).is_err());
    }

    #[test]
    fn uniform_record_is_complete_with_equal_quotas() {
        let ts = small_taskset();
        let cfg = tiny_cfg();
        let (_, rec) = train_multitask_uniform(&ts, &cfg).unwrap();
        assert_eq!(rec.rows.len(), cfg.intervals * ts.len());
        for k in 0..cfg.intervals {
            let rows: Vec<_> = rec.rows_for(k).collect();
            assert_eq!(rows.len(), ts.len());
            assert_eq!(rows.iter().map(|r| r.quota).sum::<usize>(), cfg.samples_per_interval);
            assert!(rows.iter().all(|r| r.quota == 4 && r.weight == 0.25));
            assert!(rows.iter().all(|r| r.post_psnr.is_some() && r.psnr_multi.is_some()));
        }
        assert_eq!(rec.final_metrics.len(), ts.len());
    }

    #[test]
    fn multitask_runs_are_deterministic() {
        let ts = small_taskset();
        let cfg = tiny_cfg();
        let (a, ra) = train_multitask_uniform(&ts, &cfg).unwrap();
        let (b, rb) = train_multitask_uniform(&ts, &cfg).unwrap();
        assert_eq!(param_checksum(&a), param_checksum(&b));
        assert_eq!(ra, rb);
    }

    #[test]
    fn vanishing_clip_reproduces_uniform_bit_for_bit() {
        let ts = small_taskset();
        let cfg = tiny_cfg();
        let refs = [30.0, 25.0, 28.0, 22.0];
        let (u, ru) = train_multitask_uniform(&ts, &cfg).unwrap();
        let forced = TrainConfig { clip_db: 1e-300, ..cfg };
        let (r, rr) = train_multitask_rebalanced(&ts, &refs, &forced).unwrap();
        assert_eq!(param_checksum(&u), param_checksum(&r));
        assert_eq!(ru.final_metrics, rr.final_metrics);
        assert!(rr.rows.iter().all(|r| r.weight == 0.25));
    }

    #[test]
    fn largest_distance_gets_largest_quota() {
        let ts = small_taskset();
        let cfg = TrainConfig { clip_db: 50.0, ..tiny_cfg() };
        let refs = [30.0, 25.0, 28.0, 40.0];
        let (_, rec) = train_multitask_rebalanced(&ts, &refs, &cfg).unwrap();
        for k in 0..cfg.intervals {
            let rows: Vec<_> = rec.rows_for(k).collect();
            let best = rows
                .iter()
                .max_by(|a, b| a.distance.unwrap().total_cmp(&b.distance.unwrap()))
                .unwrap();
            assert!(rows.iter().all(|r| r.quota <= best.quota));
            assert_eq!(rows.iter().map(|r| r.quota).sum::<usize>(), cfg.samples_per_interval);
        }
    }

    #[test]
    fn sparse_evaluation_reuses_the_last_plan() {
        let ts = small_taskset();
        let cfg = TrainConfig { eval_every: 2, ..tiny_cfg() };
        let refs = [30.0, 25.0, 28.0, 40.0];
        let (_, rec) = train_multitask_rebalanced(&ts, &refs, &cfg).unwrap();
        let q = |k| rec.rows_for(k).map(|r| r.quota).collect::<Vec<_>>();
        assert_eq!(q(0), q(1));
        assert!(rec.rows_for(1).all(|r| r.psnr_multi.is_none()));
        assert!(rec.rows_for(0).all(|r| r.post_psnr.is_none()));
        assert!(rec.rows_for(2).all(|r| r.post_psnr.is_some()));
    }

    #[test]
    fn zero_budget_reference_is_its_initialization() {
        let ts = small_taskset();
        let cfg = TrainConfig { reference_iterations: 0, ..tiny_cfg() };
        let task = &ts.tasks[0];
        let (net, p) = train_single_task(task, &cfg).unwrap();
        let init = SRNet::<f32>::new(1, 2, seed::derive(cfg.init_seed, &[seed::stream::REFERENCE, 0])).unwrap();
        assert_eq!(net.params(), init.params());
        assert_eq!(p, evaluate_task(&init, task, &cfg.metric).unwrap().psnr);
    }

    #[test]
    fn reference_training_is_deterministic() {
        let ts = small_taskset();
        let cfg = tiny_cfg();
        let (a, pa) = train_single_task(&ts.tasks[1], &cfg).unwrap();
        let (b, pb) = train_single_task(&ts.tasks[1], &cfg).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(param_checksum(&a), param_checksum(&b));
    }
}

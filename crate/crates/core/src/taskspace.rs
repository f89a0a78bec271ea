//! Degradation tasks as rectangles in (blur sigma, noise sigma) space.
//!
//! Scale and compression quality are sampled inside every task but never
//! define a task boundary. Boundaries are half-open: a task owns
//! `[lo, hi)` on each axis.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::degrade::{apply_chain, DegradationConfig, OperatorOrder};
use crate::pool::HrPool;
use crate::{seed, Error, ImagePlane, Result};

/// Default task names in partition order.
pub const DEFAULT_TASK_NAMES: [&str; 4] = ["mild", "blur", "noise", "severe"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSpec {
    pub name: String,
    pub blur_range: (f64, f64),
    pub noise_range: (f64, f64),
    pub fixed_scale: usize,
    pub quality_range: (u8, u8),
}

fn in_half_open(v: f64, (lo, hi): (f64, f64)) -> bool {
    if lo == hi {
        v == lo
    } else {
        lo <= v && v < hi
    }
}

impl SubspaceSpec {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi;
        if !ok_range(self.blur_range) || !ok_range(self.noise_range) {
            return Err(Error::invalid(format!("subspace `{}` has a bad range", self.name)));
        }
        let (qlo, qhi) = self.quality_range;
        if qlo == 0 || qhi > 100 || qlo > qhi {
            return Err(Error::invalid(format!("subspace `{}` has a bad quality range", self.name)));
        }
        if self.fixed_scale == 0 {
            return Err(Error::invalid(format!("subspace `{}` has scale 0", self.name)));
        }
        Ok(())
    }

    pub fn contains(&self, blur: f64, noise: f64) -> bool {
        in_half_open(blur, self.blur_range) && in_half_open(noise, self.noise_range)
    }

    pub fn contains_config(&self, cfg: &DegradationConfig) -> bool {
        let (qlo, qhi) = self.quality_range;
        self.contains(cfg.blur_sigma, cfg.noise_sigma)
            && cfg.scale == self.fixed_scale
            && (qlo..=qhi).contains(&cfg.jpeg_quality)
    }

    pub fn area(&self) -> f64 {
        (self.blur_range.1 - self.blur_range.0) * (self.noise_range.1 - self.noise_range.0)
    }
}

/// Split the full rectangle at the two thresholds into mild / blur / noise / severe.
pub fn partition_default(
    blur_full: (f64, f64),
    noise_full: (f64, f64),
    blur_thresh: f64,
    noise_thresh: f64,
    scale: usize,
    quality_range: (u8, u8),
) -> Result<Vec<SubspaceSpec>> {
    if !(blur_full.0 < blur_thresh && blur_thresh < blur_full.1) {
        return Err(Error::invalid(format!(
            "blur threshold {blur_thresh} not strictly inside {blur_full:?}"
        )));
    }
    if !(noise_full.0 < noise_thresh && noise_thresh < noise_full.1) {
        return Err(Error::invalid(format!(
            "noise threshold {noise_thresh} not strictly inside {noise_full:?}"
        )));
    }
    let low_b = (blur_full.0, blur_thresh);
    let high_b = (blur_thresh, blur_full.1);
    let low_n = (noise_full.0, noise_thresh);
    let high_n = (noise_thresh, noise_full.1);
    let rects = [(low_b, low_n), (high_b, low_n), (low_b, high_n), (high_b, high_n)];
    let specs = rects
        .iter()
        .zip(DEFAULT_TASK_NAMES)
        .map(|(&(blur_range, noise_range), name)| SubspaceSpec {
            name: name.to_string(),
            blur_range,
            noise_range,
            fixed_scale: scale,
            quality_range,
        })
        .collect::<Vec<_>>();
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

/// Draw one configuration from a subspace.
pub fn sample_config(spec: &SubspaceSpec, seed: u64) -> DegradationConfig {
    let mut rng = seed::rng(seed);
    let uniform = |rng: &mut rand_chacha::ChaCha8Rng, (lo, hi): (f64, f64)| {
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..hi)
        }
    };
    let blur_sigma = uniform(&mut rng, spec.blur_range);
    let noise_sigma = uniform(&mut rng, spec.noise_range);
    let jpeg_quality = rng.random_range(spec.quality_range.0..=spec.quality_range.1);
    DegradationConfig {
        blur_sigma,
        noise_sigma,
        scale: spec.fixed_scale,
        jpeg_quality,
        order: OperatorOrder::default(),
        repeats: 1,
    }
}

/// An (HR, LR) pair with the configuration and chain seed that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub hr: ImagePlane,
    pub lr: ImagePlane,
    pub config: DegradationConfig,
    pub chain_seed: u64,
}

/// One degradation task: its subspace, HR training sources and frozen validation pairs.
#[derive(Clone, Debug)]
pub struct Task {
    pub id: usize,
    pub subspace: SubspaceSpec,
    pub hr_source: Arc<Vec<ImagePlane>>,
    val_pairs: Arc<Vec<SamplePair>>,
}

impl Task {
    /// A task with no validation pairs yet; see [`build_validation`].
    pub fn skeleton(id: usize, subspace: SubspaceSpec, hr_source: Arc<Vec<ImagePlane>>) -> Self {
        Task {
            id,
            subspace,
            hr_source,
            val_pairs: Arc::new(Vec::new()),
        }
    }

    pub fn name(&self) -> &str {
        &self.subspace.name
    }

    pub fn val_pairs(&self) -> &[SamplePair] {
        &self.val_pairs
    }
}

/// Crop to the largest size divisible by `scale`.
fn crop_to_multiple(img: &ImagePlane, scale: usize) -> Result<ImagePlane> {
    let (h, w) = (img.height() / scale * scale, img.width() / scale * scale);
    if h == 0 || w == 0 {
        return Err(Error::invalid(format!("image smaller than scale {scale}")));
    }
    if (h, w) == (img.height(), img.width()) {
        Ok(img.clone())
    } else {
        img.crop(0, 0, h, w)
    }
}

/// Freeze `count` validation pairs for a task from a held-out HR pool.
pub fn build_validation(task: Task, hr_images: &[ImagePlane], count: usize, base_seed: u64) -> Result<Task> {
    if hr_images.is_empty() {
        return Err(Error::invalid("validation HR pool is empty"));
    }
    if count == 0 {
        return Err(Error::invalid("validation count must be >= 1"));
    }
    let scale = task.subspace.fixed_scale;
    let mut pairs = Vec::with_capacity(count);
    for j in 0..count {
        let s = seed::derive(base_seed, &[seed::stream::VALIDATION, task.id as u64, j as u64]);
        let hr = crop_to_multiple(&hr_images[j % hr_images.len()], scale)?;
        let config = sample_config(&task.subspace, seed::derive(s, &[1]));
        let chain_seed = seed::derive(s, &[2]);
        let lr = apply_chain(&hr, &config, chain_seed)?;
        pairs.push(SamplePair {
            hr,
            lr,
            config,
            chain_seed,
        });
    }
    Ok(Task {
        val_pairs: Arc::new(pairs),
        ..task
    })
}

/// Synthesize `quota` fresh training pairs for interval `k`.
///
/// Sample `s` is keyed by `(stream_seed, task.id, k, s)`, so batches are
/// reproducible and never repeat across intervals.
pub fn make_training_batch(
    task: &Task,
    quota: usize,
    interval: usize,
    patch: usize,
    stream_seed: u64,
) -> Result<Vec<SamplePair>> {
    let scale = task.subspace.fixed_scale;
    if patch == 0 || patch % scale != 0 {
        return Err(Error::invalid(format!("patch {patch} must be a positive multiple of scale {scale}")));
    }
    if quota > 0 && task.hr_source.is_empty() {
        return Err(Error::invalid(format!("task `{}` has no HR sources", task.name())));
    }
    if let Some(small) = task.hr_source.iter().find(|i| i.height() < patch || i.width() < patch) {
        return Err(Error::invalid(format!(
            "patch {patch} larger than source image {}x{}",
            small.height(),
            small.width()
        )));
    }
    (0..quota)
        .map(|s| {
            let sample_seed = seed::derive(
                stream_seed,
                &[seed::stream::TRAIN_BATCH, task.id as u64, interval as u64, s as u64],
            );
            let mut rng = seed::rng(sample_seed);
            let src = &task.hr_source[rng.random_range(0..task.hr_source.len())];
            let top = rng.random_range(0..=src.height() - patch);
            let left = rng.random_range(0..=src.width() - patch);
            let hr = src.crop(top, left, patch, patch)?;
            let config = sample_config(&task.subspace, seed::derive(sample_seed, &[1]));
            let chain_seed = seed::derive(sample_seed, &[2]);
            let lr = apply_chain(&hr, &config, chain_seed)?;
            Ok(SamplePair {
                hr,
                lr,
                config,
                chain_seed,
            })
        })
        .collect()
}

/// Human-readable task-set description; every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpaceConfig {
    pub blur_full: (f64, f64),
    pub noise_full: (f64, f64),
    pub blur_thresh: f64,
    pub noise_thresh: f64,
    pub scale: usize,
    pub quality_range: (u8, u8),
    pub val_count: usize,
    pub val_seed: u64,
}

impl Default for TaskSpaceConfig {
    fn default() -> Self {
        TaskSpaceConfig {
            blur_full: (0.2, 3.0),
            noise_full: (0.004, 0.12),
            blur_thresh: 1.5,
            noise_thresh: 0.04,
            scale: 2,
            quality_range: (60, 95),
            val_count: 8,
            val_seed: 2024,
        }
    }
}

impl TaskSpaceConfig {
    pub fn partition(&self) -> Result<Vec<SubspaceSpec>> {
        partition_default(
            self.blur_full,
            self.noise_full,
            self.blur_thresh,
            self.noise_thresh,
            self.scale,
            self.quality_range,
        )
    }

    /// Build the full task set: training crops come from `train`, validation
    /// pairs from the disjoint `val` pool.
    pub fn build(&self, train: &HrPool, val: &HrPool) -> Result<TaskSet> {
        let hr_source = Arc::new(train.images.clone());
        let tasks = self
            .partition()?
            .into_iter()
            .enumerate()
            .map(|(id, spec)| {
                build_validation(
                    Task::skeleton(id, spec, hr_source.clone()),
                    &val.images,
                    self.val_count,
                    self.val_seed,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        TaskSet::new(tasks, (self.blur_thresh, self.noise_thresh))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("task-space config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// All tasks of one experiment.
#[derive(Clone, Debug)]
pub struct TaskSet {
    pub tasks: Vec<Task>,
    pub partition_thresholds: (f64, f64),
}

impl TaskSet {
    pub fn new(tasks: Vec<Task>, partition_thresholds: (f64, f64)) -> Result<Self> {
        if tasks.len() < 2 {
            return Err(Error::invalid("a task set needs at least two tasks"));
        }
        if tasks.iter().any(|t| t.val_pairs().is_empty()) {
            return Err(Error::invalid("every task needs validation pairs"));
        }
        Ok(TaskSet {
            tasks,
            partition_thresholds,
        })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Index of the task owning a (blur, noise) point.
    pub fn locate(&self, blur: f64, noise: f64) -> Option<usize> {
        self.tasks.iter().position(|t| t.subspace.contains(blur, noise))
    }

    pub fn names(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.name().to_string()).collect()
    }
}

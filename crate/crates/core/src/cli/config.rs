use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::pool::HrPool;
use crate::taskspace::TaskSpaceConfig;
use crate::train::{MetricConfig, TrainConfig};
use crate::{seed, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory of HR images. Without one a procedural pool is generated.
    pub hr_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            hr_dir: None,
            out_dir: PathBuf::from("runs/desk"),
        }
    }
}

/// Where HR images come from and how they are split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Images held out (from the end of the sorted pool) for validation.
    pub val_images: usize,
    /// Size of the procedural pool, validation images included.
    pub synthetic_count: usize,
    pub synthetic_size: usize,
    /// Train and evaluate on BT.601 luma instead of RGB.
    pub luma: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            val_images: 8,
            synthetic_count: 72,
            synthetic_size: 96,
            luma: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    /// Root of the per-run init and data seeds.
    pub base: u64,
    /// Number of independent runs.
    pub count: u64,
    /// Seed of the procedural HR pool.
    pub pool: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig { base: 0, count: 1, pool: 7 }
    }
}

/// Everything an experiment needs. Every field has a default, so an empty
/// file describes the desk-scale benchmark.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: PathsConfig,
    pub data: DataConfig,
    pub taskspace: TaskSpaceConfig,
    pub train: TrainConfig,
    pub metric: MetricConfig,
    pub seed: SeedConfig,
}

impl ExperimentConfig {
    /// Parse and check that every referenced input path exists.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check_paths()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    fn check_paths(&self) -> Result<()> {
        let inputs = [self.paths.hr_dir.as_ref(), self.train.warm_start.as_ref()];
        for p in inputs.into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("path {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Training configuration of run `index`, with its own init and data seeds.
    pub fn train_config(&self, index: u64) -> TrainConfig {
        TrainConfig {
            init_seed: seed::derive(self.seed.base, &[seed::stream::INIT, index]),
            data_seed: seed::derive(self.seed.base, &[index]),
            metric: self.metric.clone(),
            ..self.train.clone()
        }
    }

    /// Training and validation HR pools.
    pub fn pools(&self) -> Result<(HrPool, HrPool)> {
        let pool = match &self.paths.hr_dir {
            Some(dir) => HrPool::load_dir(dir)?,
            None => HrPool::synthetic(self.data.synthetic_count, self.data.synthetic_size, self.seed.pool),
        };
        let pool = if self.data.luma { pool.to_luma()? } else { pool };
        pool.split(self.data.val_images)
    }
}

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One (interval, task) row of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub interval: usize,
    pub task: usize,
    pub task_name: String,
    pub psnr_single: Option<f64>,
    /// Shared-net validation PSNR at the start of the interval, when measured.
    pub psnr_multi: Option<f64>,
    pub distance: Option<f64>,
    pub weight: f64,
    pub quota: usize,
    pub post_psnr: Option<f64>,
    pub post_ssim: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetric {
    pub task: usize,
    pub task_name: String,
    pub psnr: f64,
    pub ssim: f64,
}

/// Audit trail of one multi-task run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub regime: String,
    pub rows: Vec<RunRow>,
    pub final_metrics: Vec<FinalMetric>,
}

impl RunRecord {
    pub fn min_psnr(&self) -> f64 {
        self.final_metrics.iter().map(|m| m.psnr).fold(f64::INFINITY, f64::min)
    }

    pub fn mean_psnr(&self) -> f64 {
        self.final_metrics.iter().map(|m| m.psnr).sum::<f64>() / self.final_metrics.len() as f64
    }

    pub fn intervals(&self) -> usize {
        self.rows.iter().map(|r| r.interval + 1).max().unwrap_or(0)
    }

    pub fn rows_for(&self, interval: usize) -> impl Iterator<Item = &RunRow> {
        self.rows.iter().filter(move |r| r.interval == interval)
    }

    /// Fill in reference PSNRs and distances after the fact (for runs that
    /// did not use them to plan).
    pub fn attach_references(&mut self, references: &[f64]) {
        for r in &mut self.rows {
            if let Some(&s) = references.get(r.task) {
                r.psnr_single = Some(s);
                r.distance = r.psnr_multi.map(|m| s - m);
            }
        }
    }

    pub fn rows_path(dir: &Path, regime: &str) -> PathBuf {
        dir.join(format!("{regime}_record.csv"))
    }

    pub fn final_path(dir: &Path, regime: &str) -> PathBuf {
        dir.join(format!("{regime}_final.csv"))
    }

    /// Write `<regime>_record.csv` and `<regime>_final.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let rows_path = Self::rows_path(dir, &self.regime);
        let mut w = csv::Writer::from_path(&rows_path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(&rows_path, e))?;
        let final_path = Self::final_path(dir, &self.regime);
        let mut w = csv::Writer::from_path(&final_path)?;
        for m in &self.final_metrics {
            w.serialize(m)?;
        }
        w.flush().map_err(|e| Error::io(&final_path, e))?;
        Ok(())
    }

    pub fn read_csv(dir: &Path, regime: &str) -> Result<Self> {
        Ok(RunRecord {
            regime: regime.to_string(),
            rows: read_rows(&Self::rows_path(dir, regime))?,
            final_metrics: read_rows(&Self::final_path(dir, regime))?,
        })
    }
}

/// Deserialize every record, reporting the line of the first bad one.
fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        match rec {
            Ok(r) => out.push(r),
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(Error::Format {
                    what: path.display().to_string(),
                    line,
                    msg: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

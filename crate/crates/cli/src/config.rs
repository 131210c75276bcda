use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use mambasl::data::{load_ts, TimeSeriesDataset};
use mambasl::model::ModelHyper;
use mambasl::train::{GridSpace, TrainConfig};

use crate::failure::Failure;

/// One training run. Relative paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    #[serde(default)]
    pub model: ModelHyper,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// A run config plus the lists to take the cartesian product over.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    #[serde(default)]
    pub model: ModelHyper,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub space: GridSpace,
}

impl GridConfig {
    pub fn split(self) -> (RunConfig, GridSpace) {
        let run = RunConfig {
            train_path: self.train_path,
            test_path: self.test_path,
            model: self.model,
            train: self.train,
            out_dir: self.out_dir,
        };
        (run, self.space)
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())).into())
}

impl RunConfig {
    pub fn resolve(mut self, config_path: &Path) -> Self {
        let base = config_path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.train_path);
        fix(&mut self.test_path);
        if let Some(o) = self.out_dir.as_mut() {
            fix(o);
        }
        self
    }

    pub fn load_data(&self) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
        let tr = load_ts(&self.train_path).context("loading train split")?;
        let te = load_ts(&self.test_path).context("loading test split")?;
        Ok((tr, te))
    }
}

/// `--out` wins, then the config, then `runs/<timestamp>`.
pub fn out_dir(flag: Option<PathBuf>, cfg: Option<&PathBuf>) -> Result<PathBuf> {
    let dir = flag.or_else(|| cfg.cloned()).unwrap_or_else(|| {
        PathBuf::from("runs").join(chrono::Local::now().format("%Y%m%d-%H%M%S").to_string())
    });
    std::fs::create_dir_all(&dir)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

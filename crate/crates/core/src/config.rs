//! The run configuration: one JSON document covering data, networks,
//! training, and evaluation, with every field defaulted.

use crate::data::PhantomSpec;
use crate::error::{Error, Result};
use crate::fsutil::write_json;
use crate::network::NetConfig;
use crate::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub window: [usize; 3],
    pub stride: [usize; 3],
    pub threshold: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            window: [16; 3],
            stride: [8; 3],
            threshold: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub phantom: PhantomSpec,
    pub dataset_size: usize,
    pub folds: usize,
    pub labeled_fraction: f64,
    pub student: NetConfig,
    pub teacher: NetConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            phantom: PhantomSpec::default(),
            dataset_size: 20,
            folds: 5,
            labeled_fraction: 0.1,
            student: NetConfig::student(),
            teacher: NetConfig::teacher(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            path: origin.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        self.student.validate()?;
        self.teacher.validate()?;
        self.train.validate()?;
        if self.dataset_size < self.folds {
            return Err(Error::invalid(format!(
                "dataset_size {} is smaller than folds {}",
                self.dataset_size, self.folds
            )));
        }
        if self.folds < 2 {
            return Err(Error::invalid(format!("folds must be at least 2, got {}", self.folds)));
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0) {
            return Err(Error::invalid(format!("labeled_fraction {} outside (0, 1]", self.labeled_fraction)));
        }
        let e = &self.eval;
        if e.stride.contains(&0) || e.window.contains(&0) {
            return Err(Error::invalid("eval.window and eval.stride must be positive"));
        }
        if e.stride.iter().zip(&e.window).any(|(s, w)| s > w) {
            return Err(Error::invalid("eval.stride must not exceed eval.window"));
        }
        if !(0.0..=1.0).contains(&e.threshold) {
            return Err(Error::invalid(format!("eval.threshold {} outside [0, 1]", e.threshold)));
        }
        Ok(())
    }

    /// Writes the resolved configuration as `run.json` under `dir`.
    pub fn persist(&self, dir: &Path) -> Result<PathBuf> {
        let p = dir.join("run.json");
        write_json(&p, self)?;
        Ok(p)
    }
}

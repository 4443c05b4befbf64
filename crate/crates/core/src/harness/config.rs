use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frank_wolfe::Algorithm;
use crate::oracle::{NoiseModel, SamplePlan};
use crate::problem::ProblemSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub algorithm: Algorithm,
    pub noise: NoiseModel,
    pub sampling: SamplePlan,
    /// Strictly decreasing, strictly positive.
    pub epsilon_grid: Vec<f64>,
    pub replications: usize,
    pub master_seed: u64,
    pub max_iter: usize,
    pub output_dir: PathBuf,
    /// Defaults to `1/(8D)`.
    #[serde(default)]
    pub eps_g: Option<f64>,
    /// Worker threads; defaults to the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Off by default so that `runs.csv` is byte-reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
    /// Write every trace to `traces/` in the form `verify` reads.
    #[serde(default)]
    pub save_traces: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub problem: ProblemSpec,
    pub noise: NoiseModel,
    pub n_grid: Vec<u64>,
    pub s_grid: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Parses JSON, reporting the failing field path on error.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    parse_json(&text)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon_grid.is_empty() {
            return Err(Error::config("epsilon_grid", "must be nonempty"));
        }
        for (i, &e) in self.epsilon_grid.iter().enumerate() {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::config(
                    format!("epsilon_grid[{i}]"),
                    format!("{e} is not positive"),
                ));
            }
            if i > 0 && e >= self.epsilon_grid[i - 1] {
                return Err(Error::config(
                    format!("epsilon_grid[{i}]"),
                    "grid must be strictly decreasing",
                ));
            }
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        self.noise
            .validate()
            .map_err(|e| Error::config("noise", e.to_string()))?;
        Ok(())
    }
}

impl ConcentrationConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

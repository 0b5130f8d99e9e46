//! Run configuration files and seed resolution.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use solstep_core::harness::{Protocol, SplitPlan, SweepAxis};
use solstep_core::pipeline::PipelineConfig;
use solstep_core::synthgen::DatasetSpec;

use crate::error::{io_err, Error, Result};

pub const SEED_ENV: &str = "SOLSTEP_SEED";
pub const DEFAULT_SEED: u64 = 42;

/// Everything a run needs. Missing fields take the reference defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directories or single readings CSVs.
    pub data: Vec<PathBuf>,
    pub out_dir: PathBuf,
    /// Overrides every other seed when set.
    pub seed: Option<u64>,
    pub pipeline: PipelineConfig,
    pub protocol: Protocol,
    pub sweep: Option<SweepAxis>,
    pub simulate: DatasetSpec,
    /// Run folds on the thread pool.
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: vec![PathBuf::from("data")],
            out_dir: PathBuf::from("out"),
            seed: None,
            pipeline: PipelineConfig::default(),
            protocol: Protocol::KFold { k: 5 },
            sweep: None,
            simulate: DatasetSpec::default(),
            parallel: true,
        }
    }
}

/// The `run.json` written beside every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool_version: String,
    pub command: String,
    pub config: RunConfig,
}

impl RunConfig {
    /// Reads TOML, JSON, or a previous run's `run.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let bad = |message: String| Error::Config(format!("{}: {message}", path.display()));
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            let value = match value {
                serde_json::Value::Object(mut m) if m.contains_key("tool_version") && m.contains_key("config") => {
                    m.remove("config").unwrap()
                }
                v => v,
            };
            serde_json::from_value(value).map_err(|e| bad(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| bad(e.to_string()))
        }
    }

    /// Applies a seed to the generator, the splits and the training.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self.simulate.seed = seed;
        self.pipeline.train.seed = seed;
        self
    }

    pub fn plan(&self) -> SplitPlan {
        SplitPlan::new(self.protocol, self.seed.unwrap_or(self.pipeline.train.seed))
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.plan().validate()?;
        Ok(())
    }
}

/// Flag, then config file, then `SOLSTEP_SEED`, then the default.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        None => Ok(DEFAULT_SEED),
    }
}

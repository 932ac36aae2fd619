//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use antiqa_core::aggregate::PoolConfig;
use antiqa_core::calibrate::FitConfig;
use antiqa_core::harness::bench::BenchConfig;
use antiqa_core::harness::synth::DegradationModel;
use antiqa_core::preproc::FilterConfig;
use antiqa_core::train::{LossConfig, OptimConfig};
use antiqa_core::ArchConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash;
use crate::manifest::Split;

/// Environment variable naming the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "ANTIQA_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub batch_size: usize,
    /// Worker threads for scoring; 0 picks one per core. Does not change output.
    pub workers: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig { batch_size: 16, workers: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub split: Split,
    pub random_runs: usize,
    /// Splits whose crops carry both OCR confidence and MOS for the 5PL fit.
    pub calibration_splits: Vec<Split>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { split: Split::Test, random_runs: 1000, calibration_splits: vec![Split::Val] }
    }
}

/// Default file locations; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds initialization, shuffling, dropout, calibration restarts,
    /// tie-breaking and the random baseline.
    pub seed: u64,
    pub arch: ArchConfig,
    pub optim: OptimConfig,
    pub loss: LossConfig,
    pub pool: PoolConfig,
    pub calibration: FitConfig,
    pub filter: FilterConfig,
    pub score: ScoreConfig,
    pub eval: EvalConfig,
    pub bench: BenchConfig,
    pub synth: DegradationModel,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        let optim = OptimConfig::default();
        RunConfig {
            seed: optim.seed,
            arch: ArchConfig::default(),
            optim,
            loss: LossConfig::default(),
            pool: PoolConfig::default(),
            calibration: FitConfig::default(),
            filter: FilterConfig::default(),
            score: ScoreConfig::default(),
            eval: EvalConfig::default(),
            bench: BenchConfig::default(),
            synth: DegradationModel::v1(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    /// Small network sized for the 64-pixel synthetic crops.
    pub fn synthetic() -> Self {
        RunConfig {
            arch: ArchConfig {
                input_size: 64,
                stage_channels: vec![8, 16, 32],
                se_reduction: 4,
                groupnorm_groups: 4,
                proj_dim: 32,
                mlp_dims: vec![96, 128, 64, 16, 1],
                ..ArchConfig::default()
            },
            ..RunConfig::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if table.get("optim").and_then(|o| o.get("seed")).is_some() {
            return Err(Error::Config("set the run seed with the top-level `seed` key, not optim.seed".into()));
        }
        let mut cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.optim.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        let mut value = toml::Table::try_from(self).expect("config serializes");
        if let Some(toml::Value::Table(o)) = value.get_mut("optim") {
            o.remove("seed");
        }
        toml::to_string(&value).expect("config serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// `explicit`, else `$ANTIQA_CONFIG`, else built-in defaults.
    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        match explicit {
            Some(p) => Self::read(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::read(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        if self.optim.seed != self.seed {
            return Err(Error::Config("optim.seed must equal the top-level seed".into()));
        }
        self.arch.validate().map_err(|e| c(&e))?;
        self.optim.validate().map_err(|e| c(&e))?;
        self.loss.validate().map_err(|e| c(&e))?;
        self.pool.validate().map_err(|e| c(&e))?;
        self.synth.validate().map_err(|e| c(&e))?;
        if self.score.batch_size == 0 {
            return Err(Error::Config("score.batch_size must be positive".into()));
        }
        if self.eval.random_runs == 0 {
            return Err(Error::Config("eval.random_runs must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over everything that can change an output; paths and the
    /// worker count are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        c.score.workers = 0;
        hash::sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }
}

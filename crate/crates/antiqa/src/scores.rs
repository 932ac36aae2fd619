//! Score files: crop-level output of `score`, image-level output of `aggregate`.

use std::path::Path;

use antiqa_core::aggregate::PoolConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::manifest::Split;

pub const CROP_SCORES_SCHEMA: &str = "antiqa-crop-scores/1";
pub const IMAGE_SCORES_SCHEMA: &str = "antiqa-image-scores/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Crop,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresHeader {
    pub schema: String,
    /// Hash of the run configuration that produced the file. Files from
    /// other tools may leave it out and are then reported as unverified.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_hash: Option<String>,
    /// Split the crops were drawn from; all splits when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<PoolConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub id: String,
    /// `None` for an image left without a score by the no-text policy.
    pub score: Option<f64>,
    /// Crops pooled into an image score.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crops: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoresFile {
    pub level: Level,
    pub header: ScoresHeader,
    pub records: Vec<ScoreRecord>,
}

impl ScoresFile {
    pub fn new(level: Level, header: ScoresHeader, records: Vec<ScoreRecord>) -> Self {
        ScoresFile { level, header, records }
    }

    pub fn schema(level: Level) -> &'static str {
        match level {
            Level::Crop => CROP_SCORES_SCHEMA,
            Level::Image => IMAGE_SCORES_SCHEMA,
        }
    }

    pub fn to_jsonl(&self) -> String {
        jsonl::to_string(&self.header, &self.records)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        jsonl::write_bytes(path, self.to_jsonl().as_bytes())
    }

    /// Reads either level, telling them apart by schema.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        let level = if first.contains(IMAGE_SCORES_SCHEMA) { Level::Image } else { Level::Crop };
        let (header, records): (ScoresHeader, Vec<ScoreRecord>) = jsonl::parse(path, &text, Self::schema(level))?;
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::format(path, format!("duplicate score for {:?}", r.id)));
            }
            if level == Level::Crop && !r.score.is_some_and(f64::is_finite) {
                return Err(Error::format(path, format!("crop {:?} has no finite score", r.id)));
            }
        }
        Ok(ScoresFile { level, header, records })
    }

    /// Refuses files made under a different configuration or manifest.
    /// Returns whether the config hash could be checked at all.
    pub fn check_provenance(&self, config_hash: &str, manifest_hash: &str) -> Result<bool> {
        if let Some(m) = &self.header.manifest_hash {
            if m != manifest_hash {
                return Err(Error::Mismatch(format!(
                    "scores were produced for manifest {m}, not the given manifest {manifest_hash}"
                )));
            }
        }
        match &self.header.config_hash {
            Some(h) if h != config_hash => Err(Error::Mismatch(format!(
                "scores were produced under config {h}, current config is {config_hash}"
            ))),
            Some(_) => Ok(true),
            None => Ok(false),
        }
    }
}

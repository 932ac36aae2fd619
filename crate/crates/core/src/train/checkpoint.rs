use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::net::{ArchConfig, ModelParams};
use crate::rng::RngState;

use super::optim::AdamState;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to score with, or resume, a model.
///
/// The on-disk container lives in the `antiqa` crate; this type only holds
/// the data.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub arch: ArchConfig,
    pub params: ModelParams,
    pub optimizer: AdamState,
    /// Completed epochs in the current stage.
    pub epoch: usize,
    pub stage: Option<String>,
    pub rng: RngState,
}

/// The non-tensor part of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub arch: ArchConfig,
    pub epoch: usize,
    pub stage: Option<String>,
    pub rng: RngState,
    pub optimizer_step: u64,
}

impl Checkpoint {
    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            version: self.version,
            arch: self.arch.clone(),
            epoch: self.epoch,
            stage: self.stage.clone(),
            rng: self.rng.clone(),
            optimizer_step: self.optimizer.step,
        }
    }
}

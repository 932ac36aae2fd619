//! Losses, AdamW, the step learning-rate schedule and the training loop.
//!
//! Training runs in two stages over the same loop: pretraining on
//! calibrated OCR-confidence targets, then finetuning on MOS. Each stage
//! starts a fresh optimizer and its own schedule.

pub mod checkpoint;
pub mod loss;
pub mod optim;
pub mod schedule;
pub mod stage;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use loss::{mse_loss, rank_loss, total_loss, LossBreakdown, LossConfig, LossError, RankLoss};
pub use optim::{adamw_step, adamw_update, AdamState, OptimConfig, OptimError};
pub use schedule::lr_at;
pub use stage::{train_stage, EpochLog, Sample, StageKind, StageOutput, TrainError};

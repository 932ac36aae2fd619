//! One training stage: seeded shuffling, minibatch AdamW, per-epoch log.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::net::{self, ArchConfig, Mode, ModelParams, NetError};
use crate::preproc::ModelInput;
use crate::rng::{self, Rng, RngState};
use crate::tensor::{Tape, Tensor, TensorError};

use super::checkpoint::{Checkpoint, CHECKPOINT_VERSION};
use super::loss::{LossConfig, LossError};
use super::optim::{adamw_step, AdamState, OptimConfig, OptimError};
use super::schedule::lr_at;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training data is empty")]
    EmptyDataset,
    #[error("target {value} of sample {index} outside [0, 5]")]
    TargetRange { index: usize, value: f64 },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("training aborted in epoch {epoch}, batch {batch}: {reason}")]
    Aborted { epoch: usize, batch: usize, reason: String, last_good: Box<Checkpoint> },
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Net(NetError::Tensor(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Pretrain,
    Finetune,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Pretrain => "pretrain",
            StageKind::Finetune => "finetune",
        }
    }

    fn stream(self) -> u64 {
        match self {
            StageKind::Pretrain => 1,
            StageKind::Finetune => 2,
        }
    }
}

/// A model input paired with its regression target.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'d> {
    pub input: &'d ModelInput,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: StageKind,
    pub epoch: usize,
    pub lr: f64,
    /// Batch-mean total loss.
    pub loss: f64,
    pub mse: f64,
    pub rank: f64,
    pub batches: usize,
}

#[derive(Debug, Clone)]
pub struct StageOutput {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

struct BatchLoss {
    total: f64,
    mse: f64,
    rank: f64,
    grads: Vec<Vec<f64>>,
}

fn batch_step(
    arch: &ArchConfig,
    params: &ModelParams,
    batch: &[Sample<'_>],
    loss: &LossConfig,
    rng: &mut Rng,
) -> Result<BatchLoss, TrainError> {
    let inputs: Vec<&Tensor> = batch.iter().map(|s| s.input.tensor()).collect();
    let targets: Vec<f64> = batch.iter().map(|s| s.target).collect();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::stack(&inputs)?);
    let out = net::forward(&mut tape, arch, params, x, Mode::Train, rng)?;
    let mse = tape.mse_loss(out.scores, &targets)?;
    let weighted_mse = tape.scale(mse, loss.alpha);
    let (total, rank) = if batch.len() >= 2 {
        let r = tape.rank_loss(out.scores, &targets)?;
        let wr = tape.scale(r, 1.0 - loss.alpha);
        (tape.add(weighted_mse, wr)?, tape.value(r)[0])
    } else {
        (weighted_mse, 0.0)
    };
    let (t, m) = (tape.value(total)[0], tape.value(mse)[0]);
    if !t.is_finite() {
        return Ok(BatchLoss { total: t, mse: m, rank, grads: Vec::new() });
    }
    tape.backward(total)?;
    let grads = out.params.gradients(&tape, params);
    Ok(BatchLoss { total: t, mse: m, rank, grads })
}

/// Trains `params` for `epochs` epochs and returns the final checkpoint plus
/// one log entry per epoch.
///
/// The optimizer starts fresh and the schedule restarts at epoch 0. Shuffling
/// and dropout share one generator derived from `optim.seed` and the stage,
/// so identical inputs give identical runs. A non-finite loss or gradient
/// aborts with the checkpoint from the end of the last complete epoch.
pub fn train_stage(
    arch: &ArchConfig,
    params: ModelParams,
    data: &[Sample<'_>],
    loss: &LossConfig,
    optim: &OptimConfig,
    epochs: usize,
    kind: StageKind,
) -> Result<StageOutput, TrainError> {
    arch.validate()?;
    net::check_params(arch, &params)?;
    loss.validate()?;
    optim.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if let Some((i, s)) = data.iter().enumerate().find(|(_, s)| !(0.0..=5.0).contains(&s.target)) {
        return Err(TrainError::TargetRange { index: i, value: s.target });
    }
    let mut rng = rng::derive(optim.seed, kind.stream());
    let mut state = AdamState::for_params(&params);
    let mut params = params;
    let snapshot = |params: &ModelParams, state: &AdamState, epoch: usize, rng: &Rng| Checkpoint {
        version: CHECKPOINT_VERSION,
        arch: arch.clone(),
        params: params.clone(),
        optimizer: state.clone(),
        epoch,
        stage: Some(kind.name().to_string()),
        rng: RngState::capture(rng),
    };
    let mut last_good = snapshot(&params, &state, 0, &rng);
    let mut log = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..epochs {
        let lr = lr_at(epoch, optim);
        order.shuffle(&mut rng);
        let (mut sum_t, mut sum_m, mut sum_r, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (bi, idx) in order.chunks(optim.batch_size).enumerate() {
            let batch: Vec<Sample<'_>> = idx.iter().map(|&i| data[i]).collect();
            let abort = |reason: String, last: &Checkpoint| TrainError::Aborted {
                epoch,
                batch: bi,
                reason,
                last_good: Box::new(last.clone()),
            };
            let b = batch_step(arch, &params, &batch, loss, &mut rng)?;
            if !b.total.is_finite() {
                return Err(abort(format!("non-finite loss {}", b.total), &last_good));
            }
            if let Err(e) = adamw_step(&mut params, &b.grads, &mut state, optim, lr) {
                return Err(abort(e.to_string(), &last_good));
            }
            sum_t += b.total;
            sum_m += b.mse;
            sum_r += b.rank;
            batches += 1;
        }
        let n = batches as f64;
        log.push(EpochLog { stage: kind, epoch, lr, loss: sum_t / n, mse: sum_m / n, rank: sum_r / n, batches });
        last_good = snapshot(&params, &state, epoch + 1, &rng);
    }
    Ok(StageOutput { checkpoint: last_good, log })
}

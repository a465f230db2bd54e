//! Sequence replay, bootstrap targets, Q and attention-policy losses, and the training loop.

mod checkpoint;
mod config;
mod losses;
mod replay;
mod schedule;
mod target;
mod trainer;

use std::path::PathBuf;

use thiserror::Error;

use crate::agent::AgentError;
use crate::envs::EnvError;
use crate::numerics::NumericsError;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, load_model, save_checkpoint,
    Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{AdvantageSign, OptimizerKind, TrainConfig};
pub use losses::{
    advantage, compute_targets, minibatch_gradients, policy_term, segment_gradients, BatchResult,
    LossConfig, SegmentResult,
};
pub use replay::{ReplayMemory, Segment, SegmentStart, Transition};
pub use schedule::{linear_schedule, Schedule};
pub use target::{sync_target, transfer_cnn, transfer_cnn_from_file, TargetNetwork};
pub use trainer::{train, EpochRecord, Learner, TrainSummary, METRICS_HEADER};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("replay holds {eligible} eligible segments, need {needed}")]
    InsufficientReplay { eligible: usize, needed: usize },
    #[error("hard-attention step has no sampled location")]
    MissingSample,
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

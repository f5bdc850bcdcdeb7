//! Vision pretraining, batched game play, the REINFORCE objective with a
//! batch-mean baseline and scheduled entropy bonus, and Adam updates.

mod optim;
mod play;
mod pretrain;
mod update;

pub use optim::{AdamConfig, OptimizerState};
pub use play::{
    play_batch, play_batch_with, Actions, BatchOutcome, FeatureTable, Features, GameOutcome, PlayConfig,
};
pub use pretrain::{classification_accuracy, pretrain_vision, Accuracy, PretrainOutcome, PRETRAIN_BATCH};
pub use update::{pair_update, surrogate_gradients, surrogate_value, Coefficients, PairState, SurrogateGradients};

use thiserror::Error;

use crate::agents::AgentError;
use crate::numerics::NumericsError;

/// Speaker games after which the entropy weight drops to its floor.
pub const ENTROPY_ANNEAL_STEPS: u64 = 1_000_000;
pub const ENTROPY_WEIGHT_MAX: f32 = 0.1;
pub const ENTROPY_WEIGHT_FLOOR: f32 = 0.01;
pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearningError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch mixes {expected} and {got} candidates per game")]
    MixedCandidateCounts { expected: usize, got: usize },
    #[error("batch tape has been released")]
    DeadTape,
    #[error("trainable set mismatch: {0}")]
    FilterMismatch(String),
    #[error("no cached feature for sample {0}")]
    MissingFeature(u32),
    #[error("expected {expected} entropy coefficients, got {got}")]
    CoefficientCount { expected: usize, got: usize },
}

/// Mean batch reward. Enters the loss as a constant.
pub fn compute_baseline(rewards: &[f32]) -> Result<f32, LearningError> {
    if rewards.is_empty() {
        return Err(LearningError::EmptyBatch);
    }
    let sum: f64 = rewards.iter().map(|&r| f64::from(r)).sum();
    Ok((sum / rewards.len() as f64) as f32)
}

/// Entropy weight for one game: `0.1 − 0.1·|R − b|` during the first million
/// speaker games, then a flat `0.01`.
pub fn entropy_coefficient(speaker_steps: u64, reward: f32, baseline: f32) -> f32 {
    if speaker_steps < ENTROPY_ANNEAL_STEPS {
        ENTROPY_WEIGHT_MAX - (reward - baseline).abs() * ENTROPY_WEIGHT_MAX
    } else {
        ENTROPY_WEIGHT_FLOOR
    }
}

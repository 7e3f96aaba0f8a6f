//! PPO training of the linear-softmax policy, for iterative exclusion
//! episodes and for one-shot direct rankings.

mod ppo;
mod train;

use thiserror::Error;

use crate::engines::EngineError;
use crate::policies::PolicyError;
use crate::types::ConfigError;

pub use ppo::{
    apply_gradient, compute_gae, gae, kl_regularizer, loss_and_grad, ppo_surrogate, value_loss, Action, LossBreakdown,
    ParamGrad, TrainingBatch, Transition,
};
pub use train::{
    read_checkpoint, train_direct, train_iterative, write_checkpoint, write_curve, Checkpoint, CurvePoint, Regime,
    TrainOutcome, Trainer, CHECKPOINT_VERSION,
};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("no training tasks")]
    NoTasks,
    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: usize, detail: String },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

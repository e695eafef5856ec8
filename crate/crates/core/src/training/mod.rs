//! Mini-batch optimisation: mean cross-entropy, global-norm clipping, Adam
//! and early stopping on dev accuracy.

mod optim;
mod trainer;

pub use optim::{adam_step, clip_global_norm, global_norm, AdamState, TrainConfig};
pub use trainer::{
    batch_loss, batch_loss_and_grads, fit, train_epoch, EpochRecord, EpochStats, FitOutcome, LOG_HEADER,
};

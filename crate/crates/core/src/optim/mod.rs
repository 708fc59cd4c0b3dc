//! Weighted cross-entropy, gradient clipping, Adam, the learning-rate
//! schedule, and the epoch loop with early stopping.

mod adam;
mod clip;
mod loss;
mod schedule;
mod train;

pub use adam::Adam;
pub use clip::clip_gradients;
pub use loss::{weighted_ce, LOG_FLOOR};
pub use schedule::{annealed_lr, lr_at_epoch};
pub use train::{
    evaluate, train_loop, EpochRecord, History, SelectMetric, TrainConfig, TrainOutcome,
};

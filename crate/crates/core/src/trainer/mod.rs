//! Joint sibling training: loss, schedule, optimizer and the epoch loop.

pub mod config;
pub mod loss;
pub mod optim;
pub mod schedule;
pub mod train;

pub use config::{DataSource, RunConfig};
pub use loss::{
    batch_loss, comm_loss, episode_mse, reg_comm_loss, sample_noise, LossBreakdown, LossConfig, TrainSample,
};
pub use optim::{step, OptimizerState};
pub use schedule::{epoch_plan, learning_rate, noise_variance, Channel, OptimizerMode, TrainSchedule};
pub use train::{prepare_samples, render_log, train, validation_psnr, EpochLog, TrainOutcome};

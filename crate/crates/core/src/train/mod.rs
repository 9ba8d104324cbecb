//! Initialization, the data-parallel training loop and sweeps.

mod init;
mod step;
mod sweep;
mod trainer;

pub use init::{glorot_limit, init_params};
pub use step::{allreduce_mean, effective_workers, shard, train_step, StepContext, StepOutcome};
pub use sweep::{run_sweep, write_sweep_status, CellOutcome, CellStatus, SweepCell, SweepSpec, SWEEP_STATUS_HEADER};
pub use trainer::{
    evaluate_persistence, load_weights, normalize, save_weights, to_pixels, EpochStats, TrainConfig, TrainHistory, Trainer,
    PIXEL_SCALE,
};

//! Optimizers and training loops: Adam for the recurrent streams,
//! Levenberg-Marquardt for the fusion network.

mod adam;
mod lm;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use lm::{
    lm_step, lm_step_problem, sse, FusionFit, LeastSquaresProblem, LmConfig, LmState, LAMBDA_MAX,
    LAMBDA_MIN,
};
pub use train::{train_fusion, train_stream, EpochStats, FULL_BATCH_LIMIT, MINI_BATCH};

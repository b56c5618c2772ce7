//! Optimization, configuration, checkpointing, the training loop, and
//! evaluation.

mod checkpoint;
mod config;
mod eval;
mod optim;
mod run;

pub use checkpoint::{checkpoint_dtype, load_checkpoint, save_checkpoint, Checkpoint};
pub use config::TrainConfig;
pub use eval::{evaluate_dataset, evaluate_samples, predict_png, EvalOutcome, SampleEval};
pub use optim::{adam_step, AdamParams, AdamSlot, AdamState, LrSchedule};
pub use run::{load_training_set, train, train_dispatch, StepLog, TrainOutcome, LOG_HEADER};

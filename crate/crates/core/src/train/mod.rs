//! Conditional flow-matching training: minibatch construction, AdamW,
//! plateau learning-rate decay, the epoch loop with physics validation and
//! checkpoint persistence.

mod adamw;
mod cfm;
mod checkpoint;
mod config;
mod run;
mod scheduler;

pub use adamw::{adamw_step, adamw_update, OptimizerState, BETA1, BETA2, EPSILON};
pub use cfm::{build_cfm_batch, cfm_batch_for_rows, cfm_loss, cfm_loss_and_grad, sample_cfm_batch, CfmBatch};
pub use checkpoint::{load_checkpoint, rng_digest, save_checkpoint, CheckpointRecord};
pub use config::{CheckpointMonitor, EpochLog, TrainConfig};
pub use run::{train, train_from, EpochEnd, TrainData, TrainOutcome, TrainState};
pub use scheduler::PlateauScheduler;

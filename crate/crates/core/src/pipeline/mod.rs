//! The three training stages: pretraining on out-of-domain speakers,
//! clean fine-tuning with the lower layers frozen, and multi-target
//! adaptation.

mod batch;
mod config;
mod train;

pub use batch::{crop_frames, domain_pools, sample_batches, sample_labeled};
pub use config::{PipelineConfig, StageConfig};
pub use train::{
    adapt, finetune, learning_rates, prepare_adapt, prepare_finetune, prepare_pretrain, pretrain, progress, resume,
    run_stage, stage_checkpoint, StepLog, TrainState,
};

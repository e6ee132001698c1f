//! Adam training on sampled patches, checkpoints, cross-validation folds and
//! per-subject evaluation.

mod adam;
mod checkpoint;
mod config;
mod data;
mod evaluate;
mod folds;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{config_hash, read_checkpoint, resume_checkpoint, save_checkpoint};
pub use config::{lr_schedule, weight_decay_at, DecayMode, TrainConfig};
pub use data::{sample_batch, Batch, Subject};
pub use evaluate::{
    evaluate_subject, predict_patches, segment, segment_with, EVAL_PATCH, EVAL_STRIDE, INFER_BATCH,
};
pub use folds::{holdout_fold, loso_folds, Fold, FoldSpec};
pub use trainer::{train_loop, Trainer};

//! Joint training, augmentation, inference with rotation voting,
//! checkpointing, and the ablation harness.

mod ablate;
mod augment;
mod config;
mod infer;
mod loss;
mod model;
mod train;

pub use ablate::{ablate, median, AblationRow, AblationTable, ABLATION_ROWS};
pub use augment::{
    augment, augment_with, sample_augment, transform_cloud, AugmentParams, TrainSample,
};
pub use config::{AugmentConfig, LossToggles, TrainConfig};
pub use infer::{
    argmax_rows, class_scores, evaluate, predict, softmax_rows, tta_predict, tta_scores,
    EvalReport,
};
pub use loss::{teacher_tables, total_loss, LossBreakdown};
pub use model::ModelState;
pub use train::{train, EpochRecord, StepRecord, TrainLog};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AdError),
    #[error(transparent)]
    Backbone(#[from] crate::backbones::BackboneError),
    #[error(transparent)]
    Fusion(#[from] crate::fusion::FusionError),
    #[error(transparent)]
    Distill(#[from] crate::distill::DistillError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] crate::autodiff::CheckpointError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

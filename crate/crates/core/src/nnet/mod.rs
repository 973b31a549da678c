//! Minimal differentiable layers, the ST-ResNet model, ADAM training,
//! gradient checking and checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
mod model;
pub mod ops;
mod tensor;
mod train;

use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, model_from_bytes, read_manifest, save_checkpoint,
    CheckpointMeta, ManifestEntry, CHECKPOINT_VERSION, FLOAT_MAGIC,
};
pub(crate) use checkpoint::{decode, encode, PayloadWriter};
pub use gradcheck::{grad_check, random_batch, relative_error, GradCheckReport, TensorCheck, REL_FLOOR};
pub use model::{
    build_model, mse, Batch, Buffer, ForwardCache, Lags, Mode, Model, ModelConfig, Param,
    ParamKind, Variant, BRANCH_NAMES,
};
pub use tensor::{conv2d, conv2d_backward, residual_unit, residual_unit_backward, ResidualWeights, Tensor};
pub use train::{
    chronological_split, epoch_batches, evaluate_mse, predict_next, train, train_epoch, Dataset,
    TrainConfig, TrainHistory,
};

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("not enough data: {0}")]
    Data(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("checkpoint format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

//! Two-head encoder–decoder, its optimizer, training loops and checkpoints.

mod adam;
pub mod checkpoint;
pub mod layers;
mod network;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CheckpointHeader, CHECKPOINT_VERSION};
pub use network::{
    AuxHead, Network, NetworkConfig, Param, ParamGroup, Prediction, BOTTLENECK, ENCODER_CONVS, ENCODER_RES,
    HEAD_KERNEL, HEAD_SCALE, MASK_DECONVS, RGB_DECONVS,
};
pub use train::{
    batch_loss, evaluate, finetune_hdr, train, train_step, FinetuneReport, LossMode, StepReport, TrainConfig,
    TrainLog,
};

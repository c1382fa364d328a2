//! The conditional imitation policy network, generic over `f32` / `f64`.

pub mod adam;
pub mod checkpoint;
pub mod def;
pub mod loss;
pub mod network;
pub mod tensor;
pub mod train;

pub use adam::{Adam, AdamParams};
pub use checkpoint::{Checkpoint, ModelInfo};
pub use def::{ConvDef, EncoderDef, NetworkDef};
pub use loss::{loss, prediction_loss, LossParams};
pub use network::{Batch, Cache, Gradients, Network, ParamBlock, Role};
pub use tensor::Tensor;
pub use train::{resume, train, train_epoch, train_step, EpochLog, Sample, TrainConfig, TrainState};

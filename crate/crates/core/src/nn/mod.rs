//! The trainable stack: FC, IC, softmax, dropout and batch-norm layers with
//! exact backpropagation, the multinomial correspondence loss and ADAM.

mod adam;
mod arch;
mod checkpoint;
pub mod layers;
mod network;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use arch::{Architecture, LayerSpec};
pub use checkpoint::{decode_checkpoint, encode_checkpoint};
pub use layers::{multinomial_loss, multinomial_loss_gradient, BatchNormParams, Mode};
pub use network::{BatchNormStatistics, Gradients, Layer, Network, ShapeInput, Trace};
pub use train::{train, TrainConfig, TrainingSet, TrainingShape};

//! Small CNN numerics in 64-bit floats: convolutions, residual skip blocks,
//! pooling, the softmax classifier, SGD with momentum and checkpointable
//! training.

mod checkpoint;
pub mod classifier;
pub mod conv;
mod model;
pub mod optim;
pub mod pool;
pub mod skip;
mod tensor;
mod train;

use thiserror::Error;

pub use checkpoint::{FORMAT_VERSION, MAGIC};
pub use classifier::{classifier_forward, cross_entropy, softmax};
pub use conv::{conv1x1_backward, conv1x1_forward, conv3x3_backward, conv3x3_forward, ConvGrads};
pub use model::{Architecture, ModelState};
pub use optim::{lr_at_epoch, sgd_momentum_step, LrSchedule};
pub use pool::{pool2x2_backward, pool2x2_forward, PoolCache};
pub use skip::{skip_block_backward, skip_block_forward, SkipCache, SkipGrads, SkipParams};
pub use tensor::Tensor4;
pub use train::{dataset_loss, test_accuracy, train, TrainConfig, TrainOutcome};

use crate::genome::GenomeError;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("cannot pool a {height}x{width} feature map")]
    OddDimension { height: usize, width: usize },
    #[error("training diverged in epoch {epoch}")]
    Diverged { epoch: u32 },
    #[error("nothing to train: {completed} epochs completed, target {target}")]
    NothingToTrain { completed: u32, target: u32 },
    #[error("invalid training schedule: {0}")]
    InvalidSchedule(String),
    #[error("checkpoint does not fit: {0}")]
    CheckpointMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

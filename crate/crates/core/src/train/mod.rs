//! Losses, optimizer, schedule, synthetic data and the toy training loop.

mod checkpoint;
mod data;
mod loss;
mod optim;
mod toy;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use data::{SynthConfig, SyntheticCorpus, Utterance};
pub use loss::{aam_softmax_loss, circle_loss, softplus, LossConfig, LossKind};
pub use optim::{adam_step, cyclical_lr, AdamState, ScheduleConfig, ADAM_EPS, BETA1, BETA2};
pub use toy::{accuracy, batch_tensor, train_toy, StepRecord, TrainConfig, TrainReport};

//! Desk-scale trainer for the three training strategies (plain, balanced
//! resampling, GroupDRO) on a dropout MLP, plus ensemble-dropout sampling
//! that produces Monte-Carlo prediction stacks for the evaluator.

mod groupdro;
mod model;
mod resample;
mod train;

pub use groupdro::{groupdro_step, GroupWeights};
pub use model::{softmax_probs, toy_gradients, Batch, BatchTargets, Gradients, Head, ParamBlock, ToyModel};
pub use resample::balanced_resample_indices;
pub use train::{mc_predict, train_toy, Ensemble, Strategy, Targets, ToyDataset, TrainConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("class {class} has no instances in group {group}; cannot balance")]
    EmptyCell { class: usize, group: u8 },
    #[error("loss of group {group} is not finite")]
    NonFiniteLoss { group: usize },
    #[error("training diverged in member {member}, epoch {epoch}, batch {batch}")]
    DivergedLoss { member: usize, epoch: usize, batch: usize },
    #[error("{0}")]
    BadConfig(String),
}

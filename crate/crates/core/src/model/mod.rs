//! Network variants, parameter audits and model files.

mod audit;
mod config;
mod io;
mod network;

pub use audit::{count_params, ParamAudit};
pub use config::{AblationStage, Architecture, BlockSpec, ModelConfig, StagePlan, Variant, KEYS as MODEL_KEYS};
pub use io::{load_model, read_model, save_model, write_model};
pub use network::{Classifier, Network, Stage, Stem, Trunk};

use crate::error::Result;

/// Builds one of the cumulative ablation variants with default widths.
pub fn build_ablation(stage: AblationStage, channels: usize, seed: u64) -> Result<Network> {
    Network::new(&ModelConfig::ablation(stage, channels).with_seed(seed))
}

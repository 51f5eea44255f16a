//! Network builders and executors: channel-stacked UNet baseline, L-UNet and
//! AL-UNet, plus the checkpoint container.

mod checkpoint;
mod config;
mod graph;

pub use checkpoint::{load_checkpoint, load_checkpoint_into, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointEntry, Manifest};
pub use config::{Arch, ArchConfig, DEFAULT_ATROUS_RATES};
pub use graph::{predict_from_logits, Gradients, LayerKind, ModelGraph, Node, Op, Trace};

use crate::error::Result;
use crate::tensor::Real;

/// Builds and initializes the network for `config`.
pub fn build_model<T: Real>(config: &ArchConfig) -> Result<ModelGraph<T>> {
    ModelGraph::build(config)
}

//! Loss, optimizer, training loop, metrics, grid search and checkpoints.

mod checkpoint;
mod config;
mod grid;
mod loss;
mod metrics;
mod radam;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Provenance, CKPT_MAGIC, CKPT_VERSION};
pub use config::{Selection, TieBreak, TrainConfig};
pub use grid::{expand_space, grid_search, mambasl_grid, GridOutcome, GridRecord, GridSpace};
pub use loss::{batch_cross_entropy, softmax_cross_entropy};
pub use metrics::{accuracy, average_rank, evaluate, wilcoxon_signed_rank, WILCOXON_EXACT_MAX_N};
pub use radam::{radam_step, OptimizerState, RAdam};
pub use trainer::{prepare_datasets, train, TrainReport};

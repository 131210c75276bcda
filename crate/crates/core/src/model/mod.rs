//! Full classifier: scaled causal input convolution, a stack of gated
//! blocks, a per-step linear classifier and a temporal aggregator.

mod config;
mod forward;
mod params;
mod pool;

pub use config::{
    kernel_size, Aggregation, ModelConfig, ModelHyper, DEFAULT_DROPOUT, DEFAULT_HEADS,
    DEFAULT_K_MIN, DEFAULT_LAMBDA,
};
pub use forward::{
    input_projection, model_backward, model_forward, predict, ModelCache, SampleCache,
};
pub use params::ModelParams;
pub use pool::{adaptive_pool, aggregate, AggregateCache};

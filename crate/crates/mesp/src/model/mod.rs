//! The predictor: configuration, parameters, forward pass, cost accounting.

pub mod blocks;
pub mod config;
pub mod cost;
pub mod params;

pub use blocks::{
    bind_params, dwd_chain, feed_forward, forward, forward_inference, patch_back, patch_embed,
    sa_block, sta_block, BoundParams,
};
pub use config::ModelConfig;
pub use cost::{count_flops, count_params};
pub use params::{param_specs, Init, ParamEntry, ParamSpec, ParamStore};

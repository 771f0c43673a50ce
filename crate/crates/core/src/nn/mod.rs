//! Layers, parameter storage, checkpoints and the Adam optimizer.

mod adam;
mod layers;
mod params;

pub use adam::{adam_step, AdamState, DEFAULT_LR};
pub use layers::{dense, e2e_conv, e2n_conv};
pub use params::{
    init_params, BoundParams, Init, ModelParams, ParamSpec, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

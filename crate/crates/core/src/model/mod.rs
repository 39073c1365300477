//! Transformer configurations, parameters, and forward passes.

pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod params;

pub use checkpoint::{average_parameters, Checkpoint, Dtype};
pub use config::{ModelConfig, ModelKind};
pub use forward::{
    frame_source, label_smoothed_loss, positional_encoding, prepare_input, Model, ModelInput,
    LN_EPS,
};
pub use params::{count_parameters, init_parameters, parameter_shapes, Parameters, CTX_PREFIX};

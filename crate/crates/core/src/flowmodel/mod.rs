//! The conditional velocity field, its LoRA adapters, and the flow-matching
//! objective over the straight noise-to-data path.

mod layer;
mod net;
mod path;

pub use layer::{LayerVars, LinearLayer, LoraAdapter, LoraConfig};
pub use net::{time_embedding, BoundNet, NetConfig, ParamGroup, VelocityFieldNet, LAYER_NAMES, TIME_FEATURES};
pub use path::{
    draw_times, flow_matching_loss, flow_matching_loss_at, flow_matching_objective, interpolate,
    interpolate_rows, velocity_regression_loss, FlowBatch,
};

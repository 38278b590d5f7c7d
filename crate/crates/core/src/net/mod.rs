//! The two-step reconstruction network.
//!
//! A local network (dense branch plus a mask-gated encoder-decoder) runs
//! first; a pointwise global network with prior-driven channel modulation
//! follows. The prior is the input SDR itself.

mod checkpoint;
mod config;
mod forward;
pub mod masks;
mod model;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use forward::{
    encoder_forward, global_net_forward, infer, lhdr_forward, local_net_forward, reflect_pad,
};
pub use masks::{bright_invalid_mask, bright_valid_mask};
pub use model::{count_macs, count_params, layer_inventory, mac_breakdown, LayerSpec, Model, Params, Resolution};

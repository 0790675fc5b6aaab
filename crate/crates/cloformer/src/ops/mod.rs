//! Differentiable operator library.
//!
//! Every operator comes in two forms: a pure function on tensors and a
//! `_t` variant that records the operation (and its backward closure) on a
//! [`crate::tape::Tape`].

mod attention;
mod conv;
mod droppath;
mod elementwise;
mod linear;
mod norm;
mod pool;
mod shape;

pub use attention::{
    pooled_attention, pooled_attention_backward, pooled_attention_t, window_attention,
    window_attention_t,
};
pub use conv::{
    conv2d, conv2d_backward, conv2d_t, conv_out_extent, dwconv2d, Conv2dParams, PadMode,
};
pub use droppath::{drop_path, drop_path_mask, drop_path_t};
pub use elementwise::{
    activation, activation_t, add, add_t, dot, dot_t, hadamard, hadamard_t, scale, scale_t,
    ActKind,
};
pub use linear::{
    fully_connected, fully_connected_backward, fully_connected_t, LinearParams,
};
pub use norm::{
    layer_norm_channels, layer_norm_channels_backward, layer_norm_channels_t, softmax_tokens,
    softmax_tokens_backward, softmax_tokens_t,
};
pub use pool::{
    avg_pool2d, avg_pool2d_backward, avg_pool2d_t, global_avg_pool, global_avg_pool_t,
};
pub use shape::{
    concat_channels, concat_channels_t, space_to_depth, space_to_depth_t, split_channels,
    split_channels_t,
};

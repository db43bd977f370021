//! Forward and backward implementations of every operator in the network.
//!
//! All operators are pure functions of their inputs: they allocate and
//! return fresh tensors, never mutate arguments, and reduce in a fixed
//! order, so results are bit-reproducible across runs.

mod activation;
mod concat;
mod conv;
mod dropout;
mod norm;
mod pool;
mod resize;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward};
pub use concat::{concat_channels, concat_channels_backward};
pub use conv::{
    conv2d, conv2d_backward, conv2d_transpose, conv2d_transpose_backward, effective_extent,
    ConvGrads,
};
pub use dropout::{dropout, dropout_backward};
pub use norm::{
    batch_norm, batch_norm_backward, BnForward, BnGrads, BnSaved, BN_EPSILON, BN_MOMENTUM,
};
pub use pool::{max_pool, max_pool_backward, PoolIndexCache};
pub use resize::{upsample_nearest, upsample_nearest_backward, zero_pad, zero_pad_backward};

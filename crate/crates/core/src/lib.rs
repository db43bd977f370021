//! Differentiable CNN engine for the DenseMapNet stereo-disparity network.
//!
//! The crate is organized in layers:
//!
//! - [`tensor`]: dense NHWC tensors, f32 for the model and f64 for checking.
//! - [`ops`]: forward/backward kernels for every operator in the network.
//! - [`gradcheck`]: central-difference verification of analytic gradients.
//! - [`graph`]: the layer registry, the declarative network description,
//!   and forward/backward execution over the assembled DAG.
//! - [`checkpoint`]: bit-exact parameter serialization with CRC validation.
//! - [`train`]: binary cross-entropy loss, RMSprop, and the epoch loop.
//! - [`data`]: stereo sample ingestion (PFM, 16-bit PNG), splitting, and a
//!   synthetic stereo generator with exact ground truth.
//! - [`eval`]: end-point-error, depth conversion, disparity rendering, and
//!   a deterministic throughput benchmark.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values;
// the suggested `x <= 0.0` would accept NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod rng;
pub mod tensor;
pub mod test_util;
pub mod train;

pub use error::{CheckpointError, DataError, EvalError, GraphError, TensorError, TrainError};
pub use tensor::{Element, Mode, OpContext, Shape, Tensor};

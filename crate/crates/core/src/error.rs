//! Error types for every subsystem of the engine.

use thiserror::Error;

use crate::tensor::Shape;

/// Errors raised by tensor construction and the operator kernels.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape} ({expected} elements)")]
    LengthMismatch {
        shape: Shape,
        len: usize,
        expected: usize,
    },
    #[error("shape mismatch: {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: Shape,
        got: Shape,
    },
    #[error("{op}: input channels {input_channels} do not match kernel input channels {kernel_channels}")]
    ChannelMismatch {
        op: &'static str,
        input_channels: usize,
        kernel_channels: usize,
    },
    #[error("{op}: parameter vector `{name}` has {len} elements, expected {expected}")]
    ParamLength {
        op: &'static str,
        name: &'static str,
        len: usize,
        expected: usize,
    },
    #[error("{op}: invalid argument: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
}

/// Errors raised while building or executing the model graph.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown layer kind `{0}` (not present in the operator registry)")]
    UnknownKind(String),
    #[error("layer `{layer}` references undeclared input `{input}`")]
    UnknownInput { layer: String, input: String },
    #[error("duplicate layer name `{0}`")]
    DuplicateName(String),
    #[error("unsupported input channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(usize),
    #[error("max disparity must be positive, got {0}")]
    InvalidDmax(f64),
    #[error("left input shape {left} does not match right input shape {right}")]
    InputMismatch { left: Shape, right: Shape },
    #[error("graph expects {expected}-channel inputs, got {got}")]
    InputChannels { expected: usize, got: usize },
    #[error("layer `{layer}`: {source}")]
    Op {
        layer: String,
        #[source]
        source: TensorError,
    },
    #[error("layer `{layer}` expects {expected} inputs, got {got}")]
    Arity {
        layer: String,
        expected: usize,
        got: usize,
    },
    #[error("missing parameter {role:?} for layer `{layer}`")]
    MissingParam { layer: String, role: crate::graph::ParamRole },
}

/// Errors raised by checkpoint serialization; load failures are kept
/// distinct so callers can tell corruption from version or shape drift.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes (not a checkpoint file)")]
    BadMagic,
    #[error("unknown checkpoint format version {0}")]
    UnknownVersion(u16),
    #[error("file truncated while reading {context}")]
    Truncated { context: String },
    #[error("CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("checkpoint parameter `{layer}` ({role:?}) has shape {got}, graph expects {expected}")]
    ShapeMismatch {
        layer: String,
        role: crate::graph::ParamRole,
        expected: Shape,
        got: Shape,
    },
    #[error("checkpoint parameter `{layer}` ({role:?}) does not exist in the graph")]
    UnknownParam { layer: String, role: crate::graph::ParamRole },
    #[error("checkpoint is missing parameter `{layer}` ({role:?})")]
    MissingParam { layer: String, role: crate::graph::ParamRole },
    #[error("invalid record field: {0}")]
    InvalidRecord(String),
}

/// Errors raised by dataset ingestion and the synthetic generator.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("PFM: bad magic (expected `Pf` single-channel header)")]
    PfmBadMagic,
    #[error("PFM: invalid dimensions: {0}")]
    PfmBadDims(String),
    #[error("PFM: invalid scale line: {0}")]
    PfmBadScale(String),
    #[error("PFM: truncated payload: expected {expected} bytes, got {got}")]
    PfmTruncated { expected: usize, got: usize },
    #[error("{path}: expected a 16-bit single-channel image, got {got}")]
    KittiNot16Bit { path: String, got: String },
    #[error("image decode error for {path}: {source}")]
    ImageDecode {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("crop window {crop_w}x{crop_h} does not fit into image {w}x{h}")]
    CropTooLarge {
        crop_w: usize,
        crop_h: usize,
        w: usize,
        h: usize,
    },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("all {0} samples were rejected by the disparity filter")]
    AllRejected(usize),
    #[error("empty sample list")]
    EmptyDataset,
    #[error("synthetic generator: {0}")]
    SynthInvalid(String),
    #[error("dataset directory {dir}: {reason}")]
    BadDatasetDir { dir: String, reason: String },
    #[error("metadata file {path}: {reason}")]
    BadMeta { path: String, reason: String },
}

/// Errors raised by the training loop and loss/optimizer steps.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss mask has no valid pixels")]
    EmptyMask,
    #[error("loss/prediction shape mismatch: pred {pred}, target {target}")]
    ShapeMismatch { pred: Shape, target: Shape },
    #[error("non-finite gradient in parameter `{layer}` ({role:?}); step aborted")]
    NonFiniteGradient { layer: String, role: crate::graph::ParamRole },
    #[error("non-finite loss at epoch {epoch}; last good checkpoint retained{}", .last_checkpoint.as_deref().map(|p| format!(" at {p}")).unwrap_or_default())]
    NonFiniteLoss {
        epoch: usize,
        last_checkpoint: Option<String>,
    },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Errors raised by evaluation metrics.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty mask: no valid pixels to evaluate")]
    EmptyMask,
    #[error("shape mismatch: prediction {pred}, ground truth {gt}")]
    ShapeMismatch { pred: Shape, gt: Shape },
    #[error("disparity must be positive for depth conversion, got {0}")]
    NonPositiveDisparity(f64),
    #[error("image write error for {path}: {source}")]
    ImageWrite {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("benchmark: inference outputs differ between iterations (checksum {a:#018x} vs {b:#018x})")]
    NonDeterministic { a: u64, b: u64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

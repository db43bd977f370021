//! Declarative model graphs: layer specs, the operator registry, and
//! forward/backward execution over the assembled DAG.
//!
//! Every layer kind lives behind the [`LayerOp`] trait and is instantiated
//! by name through an [`OpRegistry`], so the graph executor is a plain
//! interpreter over trait objects. [`densemapnet::build_densemapnet`]
//! assembles the stereo-disparity network from `LayerSpec`s.

mod densemapnet;
mod layers;

pub use densemapnet::{build_densemapnet, densemapnet_specs};
pub use layers::register_builtin_ops;

use std::collections::HashMap;
use std::fmt;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GraphError, TensorError};
use crate::ops::{BnSaved, PoolIndexCache};
use crate::tensor::{Element, Mode, OpContext, Shape, Tensor};

/// Role of one parameter tensor within its layer. The discriminant is the
/// role byte in the checkpoint format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ParamRole {
    Kernel = 0,
    Bias = 1,
    Gamma = 2,
    Beta = 3,
    RunningMean = 4,
    RunningVar = 5,
}

impl ParamRole {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => ParamRole::Kernel,
            1 => ParamRole::Bias,
            2 => ParamRole::Gamma,
            3 => ParamRole::Beta,
            4 => ParamRole::RunningMean,
            5 => ParamRole::RunningVar,
            _ => return None,
        })
    }

    /// Trainable roles take optimizer updates; running statistics do not.
    pub fn is_trainable(&self) -> bool {
        matches!(
            self,
            ParamRole::Kernel | ParamRole::Bias | ParamRole::Gamma | ParamRole::Beta
        )
    }
}

/// One layer of the network, by kind and attributes.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Conv {
        kernel: usize,
        dilation: usize,
        out_channels: usize,
    },
    ConvTranspose {
        kernel: usize,
        out_channels: usize,
    },
    BatchNorm,
    Relu,
    Sigmoid,
    Dropout {
        rate: f64,
    },
    MaxPool {
        pool: usize,
    },
    Upsample {
        factor: usize,
    },
    ZeroPad,
    Concat,
}

impl LayerKind {
    /// Registry key for this kind.
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::ConvTranspose { .. } => "conv_transpose",
            LayerKind::BatchNorm => "bn",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::MaxPool { .. } => "maxpool",
            LayerKind::Upsample { .. } => "upsample",
            LayerKind::ZeroPad => "zeropad",
            LayerKind::Concat => "concat",
        }
    }
}

/// Which sub-network a layer belongs to, for the structural census.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkPart {
    Correspondence,
    Disparity,
    Plumbing,
}

/// Declarative description of one layer: a unique name, the operator kind,
/// and the upstream layers (or the `left`/`right` graph sources) it reads.
#[derive(Clone, Debug)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<String>,
    pub part: NetworkPart,
}

impl LayerSpec {
    pub fn new(
        name: impl Into<String>,
        kind: LayerKind,
        inputs: &[&str],
        part: NetworkPart,
    ) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            part,
        }
    }
}

/// Parameter tensors of one layer, keyed by role.
#[derive(Clone, Debug)]
pub struct LayerParams<T: Element> {
    entries: Vec<(ParamRole, Tensor<T>)>,
}

impl<T: Element> Default for LayerParams<T> {
    fn default() -> Self {
        LayerParams {
            entries: Vec::new(),
        }
    }
}

impl<T: Element> LayerParams<T> {
    pub fn get(&self, role: ParamRole) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(r, _)| *r == role).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, role: ParamRole) -> Option<&mut Tensor<T>> {
        self.entries
            .iter_mut()
            .find(|(r, _)| *r == role)
            .map(|(_, t)| t)
    }

    pub fn insert(&mut self, role: ParamRole, tensor: Tensor<T>) {
        debug_assert!(self.get(role).is_none());
        self.entries.push((role, tensor));
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamRole, &Tensor<T>)> {
        self.entries.iter().map(|(r, t)| (*r, t))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn required(&self, op: &'static str, role: ParamRole) -> Result<&Tensor<T>, TensorError> {
        self.get(role).ok_or_else(|| TensorError::InvalidArgument {
            op,
            reason: format!("missing parameter {role:?}"),
        })
    }
}

/// Per-layer state the forward pass must hand to the backward pass.
#[derive(Clone, Debug)]
pub enum Saved<T: Element> {
    None,
    Pool(PoolIndexCache),
    Bn(BnSaved<T>),
    Dropout(OpContext),
}

/// Execution context for one layer invocation.
#[derive(Clone, Copy, Debug)]
pub struct LayerCtx {
    pub ctx: OpContext,
    /// Source image dims; `zeropad` pads back to these.
    pub full_h: usize,
    pub full_w: usize,
}

/// Forward result of one layer.
pub struct ForwardOut<T: Element> {
    pub output: Tensor<T>,
    pub saved: Saved<T>,
    /// Updated BN running statistics (train mode only); the executor folds
    /// them back into the parameter store.
    pub running_update: Option<(Vec<T>, Vec<T>)>,
}

impl<T: Element> ForwardOut<T> {
    pub fn plain(output: Tensor<T>) -> Self {
        ForwardOut {
            output,
            saved: Saved::None,
            running_update: None,
        }
    }
}

/// Backward result of one layer: one gradient per input, plus gradients
/// for the layer's own trainable parameters.
pub struct BackwardOut<T: Element> {
    pub input_grads: Vec<Tensor<T>>,
    pub param_grads: Option<LayerParams<T>>,
}

/// Strategy interface every layer kind implements. Instances are built per
/// layer from its [`LayerSpec`] by the registry and hold the layer's
/// attributes (kernel size, dilation, rate, ...), never its parameters.
pub trait LayerOp<T: Element>: Send + Sync {
    fn kind_name(&self) -> &'static str;

    /// Output channel count given the input channel counts.
    fn out_channels(&self, in_channels: &[usize]) -> usize;

    /// Shapes of the parameters this layer owns, given input channels.
    fn param_shapes(&self, _in_channels: &[usize]) -> Vec<(ParamRole, Shape)> {
        Vec::new()
    }

    /// Number of inputs this op expects; `None` means variadic (>= 1).
    fn arity(&self) -> Option<usize> {
        Some(1)
    }

    fn is_conv(&self) -> bool {
        false
    }

    fn forward(
        &self,
        inputs: &[&Tensor<T>],
        params: &LayerParams<T>,
        lcx: &LayerCtx,
    ) -> Result<ForwardOut<T>, TensorError>;

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        params: &LayerParams<T>,
        saved: &Saved<T>,
        grad_out: &Tensor<T>,
    ) -> Result<BackwardOut<T>, TensorError>;
}

type OpFactory<T> = Box<dyn Fn(&LayerKind) -> Result<Box<dyn LayerOp<T>>, GraphError> + Send + Sync>;

/// Maps layer-kind names to operator factories. The default registry holds
/// every built-in kind; alternates can be registered under new names.
pub struct OpRegistry<T: Element> {
    factories: HashMap<&'static str, OpFactory<T>>,
}

impl<T: Element> OpRegistry<T> {
    pub fn empty() -> Self {
        OpRegistry {
            factories: HashMap::new(),
        }
    }

    /// Registry with all built-in layer kinds.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        register_builtin_ops(&mut r);
        r
    }

    pub fn register(&mut self, name: &'static str, factory: OpFactory<T>) {
        self.factories.insert(name, factory);
    }

    /// Instantiates the operator for a layer kind.
    pub fn instantiate(&self, kind: &LayerKind) -> Result<Box<dyn LayerOp<T>>, GraphError> {
        let factory = self
            .factories
            .get(kind.name())
            .ok_or_else(|| GraphError::UnknownKind(kind.name().to_string()))?;
        factory(kind)
    }

    pub fn kinds(&self) -> Vec<&'static str> {
        let mut v: Vec<&'static str> = self.factories.keys().copied().collect();
        v.sort_unstable();
        v
    }
}

/// Resolved reference to a layer input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeRef {
    Left,
    Right,
    Layer(usize),
}

struct Layer<T: Element> {
    spec: LayerSpec,
    op: Box<dyn LayerOp<T>>,
    inputs: Vec<NodeRef>,
    out_channels: usize,
    params: LayerParams<T>,
    /// Stable dropout site index, assigned in declaration order.
    dropout_site: Option<u64>,
    /// How many later layers consume this output (for memory reclamation).
    consumers: usize,
}

/// Retained intermediates of one training forward pass. Owning this record
/// is the proof that a forward pass happened; [`ModelGraph::backward`]
/// consumes it by reference.
pub struct ExecRecord<T: Element> {
    outputs: Vec<Tensor<T>>,
    saved: Vec<Saved<T>>,
    left: Tensor<T>,
    right: Tensor<T>,
}

impl<T: Element> ExecRecord<T> {
    /// The network output (the single sink's activation).
    pub fn output(&self) -> &Tensor<T> {
        self.outputs.last().expect("graph has at least one layer")
    }
}

/// Gradients for every parameter, aligned with the graph's layer order.
pub struct GradStore<T: Element> {
    by_layer: Vec<Option<LayerParams<T>>>,
}

impl<T: Element> GradStore<T> {
    /// Store with no gradients, e.g. for exercising optimizer edge cases.
    pub fn empty(layer_count: usize) -> Self {
        GradStore {
            by_layer: (0..layer_count).map(|_| None).collect(),
        }
    }

    pub fn get(&self, layer_id: usize, role: ParamRole) -> Option<&Tensor<T>> {
        self.by_layer[layer_id].as_ref().and_then(|g| g.get(role))
    }

    /// Inserts or replaces one gradient tensor.
    pub fn insert(&mut self, layer_id: usize, role: ParamRole, tensor: Tensor<T>) {
        let slot = self.by_layer[layer_id].get_or_insert_with(LayerParams::default);
        if let Some(existing) = slot.get_mut(role) {
            *existing = tensor;
        } else {
            slot.insert(role, tensor);
        }
    }

    /// Iterates all parameter gradients as (layer_id, role, tensor).
    pub fn iter(&self) -> impl Iterator<Item = (usize, ParamRole, &Tensor<T>)> {
        self.by_layer
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (i, g)))
            .flat_map(|(i, g)| g.iter().map(move |(r, t)| (i, r, t)))
    }
}

/// Summary row for the parameter table.
#[derive(Clone, Debug)]
pub struct LayerParamInfo {
    pub name: String,
    pub kind: &'static str,
    pub part: NetworkPart,
    pub trainable: usize,
    pub non_trainable: usize,
}

/// The assembled network: layers in topological order plus their parameter
/// store. Forward and backward walk the same order; an instance is not
/// reentrant during a retained pass (the record owns the intermediates).
pub struct ModelGraph<T: Element> {
    layers: Vec<Layer<T>>,
    name_to_id: HashMap<String, usize>,
    input_channels: usize,
    dmax: f64,
}

impl<T: Element> ModelGraph<T> {
    /// Assembles a graph from layer specs, resolving operators through the
    /// registry and allocating zeroed parameters.
    pub fn from_specs(
        specs: Vec<LayerSpec>,
        registry: &OpRegistry<T>,
        input_channels: usize,
        dmax: f64,
    ) -> Result<Self, GraphError> {
        let mut layers: Vec<Layer<T>> = Vec::with_capacity(specs.len());
        let mut name_to_id = HashMap::new();
        let mut dropout_sites = 0u64;

        for spec in specs {
            if name_to_id.contains_key(&spec.name)
                || spec.name == "left"
                || spec.name == "right"
            {
                return Err(GraphError::DuplicateName(spec.name));
            }
            let op = registry.instantiate(&spec.kind)?;

            let mut inputs = Vec::with_capacity(spec.inputs.len());
            let mut in_channels = Vec::with_capacity(spec.inputs.len());
            for input in &spec.inputs {
                let node = match input.as_str() {
                    "left" => NodeRef::Left,
                    "right" => NodeRef::Right,
                    name => {
                        let id = *name_to_id.get(name).ok_or_else(|| GraphError::UnknownInput {
                            layer: spec.name.clone(),
                            input: name.to_string(),
                        })?;
                        NodeRef::Layer(id)
                    }
                };
                in_channels.push(match node {
                    NodeRef::Left | NodeRef::Right => input_channels,
                    NodeRef::Layer(id) => layers[id].out_channels,
                });
                inputs.push(node);
            }
            if let Some(expected) = op.arity() {
                if inputs.len() != expected {
                    return Err(GraphError::Arity {
                        layer: spec.name.clone(),
                        expected,
                        got: inputs.len(),
                    });
                }
            } else if inputs.is_empty() {
                return Err(GraphError::Arity {
                    layer: spec.name.clone(),
                    expected: 1,
                    got: 0,
                });
            }

            for node in &inputs {
                if let NodeRef::Layer(id) = node {
                    layers[*id].consumers += 1;
                }
            }

            let out_channels = op.out_channels(&in_channels);
            let mut params = LayerParams::default();
            for (role, shape) in op.param_shapes(&in_channels) {
                let init = match role {
                    ParamRole::Gamma | ParamRole::RunningVar => Tensor::filled(shape, T::one()),
                    _ => Tensor::zeros(shape),
                };
                params.insert(role, init);
            }
            let dropout_site = matches!(spec.kind, LayerKind::Dropout { .. }).then(|| {
                let site = dropout_sites;
                dropout_sites += 1;
                site
            });

            name_to_id.insert(spec.name.clone(), layers.len());
            layers.push(Layer {
                spec,
                op,
                inputs,
                out_channels,
                params,
                dropout_site,
                consumers: 0,
            });
        }

        let sinks = layers.iter().filter(|l| l.consumers == 0).count();
        if sinks != 1 {
            return Err(GraphError::UnknownInput {
                layer: "<graph>".into(),
                input: format!("expected a single sink, found {sinks}"),
            });
        }

        Ok(ModelGraph {
            layers,
            name_to_id,
            input_channels,
            dmax,
        })
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    /// Maximum disparity in pixels this model's normalized output maps to.
    pub fn dmax(&self) -> f64 {
        self.dmax
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_name(&self, id: usize) -> &str {
        &self.layers[id].spec.name
    }

    pub fn layer_id(&self, name: &str) -> Option<usize> {
        self.name_to_id.get(name).copied()
    }

    /// Draws fresh parameters: kernels from the fan-in-scaled uniform
    /// distribution `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, biases and betas
    /// zero, gammas one, running statistics at identity.
    pub fn init_parameters(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            if let Some(kernel) = layer.params.get_mut(ParamRole::Kernel) {
                let s = kernel.shape();
                let fan_in = (s.n() * s.h() * s.w()) as f64;
                let bound = (6.0 / fan_in).sqrt();
                let dist = Uniform::new(-bound, bound);
                for v in kernel.data_mut() {
                    *v = T::from_f64(dist.sample(&mut rng));
                }
            }
        }
    }

    fn check_inputs(&self, left: &Tensor<T>, right: &Tensor<T>) -> Result<(), GraphError> {
        if left.shape() != right.shape() {
            return Err(GraphError::InputMismatch {
                left: left.shape(),
                right: right.shape(),
            });
        }
        if left.shape().c() != self.input_channels {
            return Err(GraphError::InputChannels {
                expected: self.input_channels,
                got: left.shape().c(),
            });
        }
        Ok(())
    }

    /// Inference-mode forward pass: pure, deterministic, and frees
    /// intermediates as soon as their consumers are done.
    pub fn predict(&self, left: &Tensor<T>, right: &Tensor<T>) -> Result<Tensor<T>, GraphError> {
        self.check_inputs(left, right)?;
        let (mut outputs, _, _) =
            self.execute(left, right, Mode::Inference, 0, 0, false)?;
        Ok(outputs.pop().expect("graph has at least one layer"))
    }

    /// Train-mode forward pass with retained intermediates. Batch-norm
    /// running statistics are updated in place; dropout draws its masks
    /// from `(seed, step, site)`.
    pub fn forward_train(
        &mut self,
        left: &Tensor<T>,
        right: &Tensor<T>,
        seed: u64,
        step: u64,
    ) -> Result<ExecRecord<T>, GraphError> {
        self.check_inputs(left, right)?;
        let (outputs, saved, updates) = self.execute(left, right, Mode::Train, seed, step, true)?;
        for (id, (mean, var)) in updates {
            let layer = &mut self.layers[id];
            if let Some(t) = layer.params.get_mut(ParamRole::RunningMean) {
                t.data_mut().copy_from_slice(&mean);
            }
            if let Some(t) = layer.params.get_mut(ParamRole::RunningVar) {
                t.data_mut().copy_from_slice(&var);
            }
        }
        Ok(ExecRecord {
            outputs,
            saved,
            left: left.clone(),
            right: right.clone(),
        })
    }

    #[allow(clippy::type_complexity)]
    fn execute(
        &self,
        left: &Tensor<T>,
        right: &Tensor<T>,
        mode: Mode,
        seed: u64,
        step: u64,
        retain: bool,
    ) -> Result<(Vec<Tensor<T>>, Vec<Saved<T>>, Vec<(usize, (Vec<T>, Vec<T>))>), GraphError> {
        let full_h = left.shape().h();
        let full_w = left.shape().w();
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        let mut saved: Vec<Saved<T>> = Vec::with_capacity(self.layers.len());
        let mut updates = Vec::new();
        // remaining consumers per layer output, for eager reclamation
        let mut remaining: Vec<usize> = self.layers.iter().map(|l| l.consumers).collect();

        for (id, layer) in self.layers.iter().enumerate() {
            let inputs: Vec<&Tensor<T>> = layer
                .inputs
                .iter()
                .map(|node| match node {
                    NodeRef::Left => left,
                    NodeRef::Right => right,
                    NodeRef::Layer(j) => &outputs[*j],
                })
                .collect();

            // one RNG stream per dropout site per training step
            let stream = layer.dropout_site.map_or(0, |site| (step << 8) | site);
            let lcx = LayerCtx {
                ctx: OpContext {
                    mode,
                    rng_seed: seed,
                    rng_stream_id: stream,
                },
                full_h,
                full_w,
            };

            let out = layer
                .op
                .forward(&inputs, &layer.params, &lcx)
                .map_err(|source| GraphError::Op {
                    layer: layer.spec.name.clone(),
                    source,
                })?;

            if let Some(update) = out.running_update {
                updates.push((id, update));
            }
            outputs.push(out.output);
            saved.push(if retain { out.saved } else { Saved::None });

            if !retain {
                for node in &layer.inputs {
                    if let NodeRef::Layer(j) = node {
                        remaining[*j] -= 1;
                        if remaining[*j] == 0 {
                            outputs[*j] = Tensor::zeros(Shape::nhwc(0, 0, 0, 0));
                        }
                    }
                }
            }
        }
        Ok((outputs, saved, updates))
    }

    /// Reverse pass over a retained record. Gradients accumulate across
    /// every consumer a dense concatenation created; returns the gradient
    /// of each trainable parameter.
    pub fn backward(
        &self,
        record: &ExecRecord<T>,
        loss_grad: &Tensor<T>,
    ) -> Result<GradStore<T>, GraphError> {
        let n = self.layers.len();
        let mut grad_acc: Vec<Option<Tensor<T>>> = vec![None; n];
        grad_acc[n - 1] = Some(loss_grad.clone());
        let mut store = GradStore {
            by_layer: (0..n).map(|_| None).collect(),
        };

        for id in (0..n).rev() {
            let Some(grad_out) = grad_acc[id].take() else {
                continue;
            };
            let layer = &self.layers[id];
            let inputs: Vec<&Tensor<T>> = layer
                .inputs
                .iter()
                .map(|node| match node {
                    NodeRef::Left => &record.left,
                    NodeRef::Right => &record.right,
                    NodeRef::Layer(j) => &record.outputs[*j],
                })
                .collect();

            let out = layer
                .op
                .backward(
                    &inputs,
                    &record.outputs[id],
                    &layer.params,
                    &record.saved[id],
                    &grad_out,
                )
                .map_err(|source| GraphError::Op {
                    layer: layer.spec.name.clone(),
                    source,
                })?;

            debug_assert_eq!(out.input_grads.len(), inputs.len());
            for (node, gi) in layer.inputs.iter().zip(out.input_grads) {
                if let NodeRef::Layer(j) = node {
                    match &mut grad_acc[*j] {
                        Some(acc) => acc.add_assign(&gi),
                        slot => *slot = Some(gi),
                    }
                }
            }
            store.by_layer[id] = out.param_grads;
        }
        Ok(store)
    }

    /// Number of convolutional layers (conv and transposed conv).
    pub fn conv_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| l.op.is_conv()).count()
    }

    /// Number of convolutional layers in the disparity-network partition.
    pub fn disparity_conv_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.op.is_conv() && l.spec.part == NetworkPart::Disparity)
            .count()
    }

    /// Output channel count of every concatenation layer, in graph order.
    pub fn concat_channel_counts(&self) -> Vec<(String, usize)> {
        self.layers
            .iter()
            .filter(|l| matches!(l.spec.kind, LayerKind::Concat))
            .map(|l| (l.spec.name.clone(), l.out_channels))
            .collect()
    }

    /// (trainable, non-trainable) parameter totals.
    pub fn count_parameters(&self) -> (usize, usize) {
        let mut trainable = 0;
        let mut frozen = 0;
        for layer in &self.layers {
            for (role, t) in layer.params.iter() {
                if role.is_trainable() {
                    trainable += t.len();
                } else {
                    frozen += t.len();
                }
            }
        }
        (trainable, frozen)
    }

    /// Per-layer parameter summary for reporting.
    pub fn layer_param_summary(&self) -> Vec<LayerParamInfo> {
        self.layers
            .iter()
            .map(|l| {
                let mut trainable = 0;
                let mut frozen = 0;
                for (role, t) in l.params.iter() {
                    if role.is_trainable() {
                        trainable += t.len();
                    } else {
                        frozen += t.len();
                    }
                }
                LayerParamInfo {
                    name: l.spec.name.clone(),
                    kind: l.spec.kind.name(),
                    part: l.spec.part,
                    trainable,
                    non_trainable: frozen,
                }
            })
            .collect()
    }

    /// Visits every parameter in a fixed order: layers in graph order,
    /// roles in declaration order.
    pub fn visit_params(&self, mut f: impl FnMut(usize, &str, ParamRole, &Tensor<T>)) {
        for (id, layer) in self.layers.iter().enumerate() {
            for (role, t) in layer.params.iter() {
                f(id, &layer.spec.name, role, t);
            }
        }
    }

    /// Mutable variant of [`Self::visit_params`], same order.
    pub fn visit_params_mut(&mut self, mut f: impl FnMut(usize, &str, ParamRole, &mut Tensor<T>)) {
        for (id, layer) in self.layers.iter_mut().enumerate() {
            for (role, t) in layer.params.entries.iter_mut() {
                f(id, &layer.spec.name, *role, t);
            }
        }
    }

    /// Shape of one parameter, if the layer and role exist.
    pub fn param_shape(&self, layer: &str, role: ParamRole) -> Option<Shape> {
        let id = self.name_to_id.get(layer)?;
        self.layers[*id].params.get(role).map(|t| t.shape())
    }

    /// Replaces one parameter tensor; shape must match exactly.
    pub fn set_param(
        &mut self,
        layer: &str,
        role: ParamRole,
        tensor: Tensor<T>,
    ) -> Result<(), GraphError> {
        let id = *self
            .name_to_id
            .get(layer)
            .ok_or_else(|| GraphError::UnknownInput {
                layer: layer.to_string(),
                input: format!("{role:?}"),
            })?;
        let slot = self.layers[id]
            .params
            .get_mut(role)
            .ok_or(GraphError::MissingParam {
                layer: layer.to_string(),
                role,
            })?;
        assert_eq!(slot.shape(), tensor.shape(), "set_param shape mismatch");
        *slot = tensor;
        Ok(())
    }
}

impl<T: Element> fmt::Debug for ModelGraph<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (trainable, frozen) = self.count_parameters();
        write!(
            f,
            "ModelGraph({} layers, {} conv, {} trainable / {} frozen params)",
            self.layers.len(),
            self.conv_layer_count(),
            trainable,
            frozen
        )
    }
}

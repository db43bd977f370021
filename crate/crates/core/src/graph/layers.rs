//! Built-in [`LayerOp`] implementations wrapping the tensor-core kernels.

use super::{
    BackwardOut, ForwardOut, LayerCtx, LayerKind, LayerOp, LayerParams, OpRegistry, ParamRole,
    Saved,
};
use crate::error::GraphError;
use crate::ops;
use crate::tensor::{Element, Mode, Shape, Tensor};

/// Registers every built-in layer kind with the registry.
pub fn register_builtin_ops<T: Element>(registry: &mut OpRegistry<T>) {
    registry.register(
        "conv",
        Box::new(|kind| match kind {
            LayerKind::Conv {
                kernel,
                dilation,
                out_channels,
            } => Ok(Box::new(ConvOp {
                kernel: *kernel,
                dilation: *dilation,
                out_channels: *out_channels,
            })),
            other => Err(GraphError::UnknownKind(other.name().into())),
        }),
    );
    registry.register(
        "conv_transpose",
        Box::new(|kind| match kind {
            LayerKind::ConvTranspose {
                kernel,
                out_channels,
            } => Ok(Box::new(ConvTransposeOp {
                kernel: *kernel,
                out_channels: *out_channels,
            })),
            other => Err(GraphError::UnknownKind(other.name().into())),
        }),
    );
    registry.register(
        "bn",
        Box::new(|kind| match kind {
            LayerKind::BatchNorm => Ok(Box::new(BatchNormOp)),
            other => Err(GraphError::UnknownKind(other.name().into())),
        }),
    );
    registry.register(
        "relu",
        Box::new(|kind| match kind {
            LayerKind::Relu => Ok(Box::new(ReluOp)),
            other => Err(GraphError::UnknownKind(other.name().into())),
        }),
    );
    registry.register(
        "sigmoid",
        Box::new(|kind| match kind {
            LayerKind::Sigmoid => Ok(Box::new(SigmoidOp)),
            other => Err(GraphError::UnknownKind(other.name().into())),
        }),
    );
    registry.register(
        "dropout",
        Box::new(|kind| match kind {
            LayerKind::Dropout { rate } => Ok(Box::new(DropoutOp { rate: *rate })),
            other => Err(GraphError::UnknownKind(other.name().into())),
        }),
    );
    registry.register(
        "maxpool",
        Box::new(|kind| match kind {
            LayerKind::MaxPool { pool } => Ok(Box::new(MaxPoolOp { pool: *pool })),
            other => Err(GraphError::UnknownKind(other.name().into())),
        }),
    );
    registry.register(
        "upsample",
        Box::new(|kind| match kind {
            LayerKind::Upsample { factor } => Ok(Box::new(UpsampleOp { factor: *factor })),
            other => Err(GraphError::UnknownKind(other.name().into())),
        }),
    );
    registry.register(
        "zeropad",
        Box::new(|kind| match kind {
            LayerKind::ZeroPad => Ok(Box::new(ZeroPadOp)),
            other => Err(GraphError::UnknownKind(other.name().into())),
        }),
    );
    registry.register(
        "concat",
        Box::new(|kind| match kind {
            LayerKind::Concat => Ok(Box::new(ConcatOp)),
            other => Err(GraphError::UnknownKind(other.name().into())),
        }),
    );
}

struct ConvOp {
    kernel: usize,
    dilation: usize,
    out_channels: usize,
}

impl<T: Element> LayerOp<T> for ConvOp {
    fn kind_name(&self) -> &'static str {
        "conv"
    }

    fn out_channels(&self, _in: &[usize]) -> usize {
        self.out_channels
    }

    fn param_shapes(&self, in_channels: &[usize]) -> Vec<(ParamRole, Shape)> {
        vec![
            (
                ParamRole::Kernel,
                Shape([self.kernel, self.kernel, in_channels[0], self.out_channels]),
            ),
            (ParamRole::Bias, Shape::nhwc(1, 1, 1, self.out_channels)),
        ]
    }

    fn is_conv(&self) -> bool {
        true
    }

    fn forward(
        &self,
        inputs: &[&Tensor<T>],
        params: &LayerParams<T>,
        _lcx: &LayerCtx,
    ) -> Result<ForwardOut<T>, crate::error::TensorError> {
        let kernel = params.required("conv", ParamRole::Kernel)?;
        let bias = params.required("conv", ParamRole::Bias)?;
        let out = ops::conv2d(inputs[0], kernel, bias.data(), self.dilation)?;
        Ok(ForwardOut::plain(out))
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        params: &LayerParams<T>,
        _saved: &Saved<T>,
        grad_out: &Tensor<T>,
    ) -> Result<BackwardOut<T>, crate::error::TensorError> {
        let kernel = params.required("conv", ParamRole::Kernel)?;
        let grads = ops::conv2d_backward(inputs[0], kernel, self.dilation, grad_out)?;
        let mut param_grads = LayerParams::default();
        param_grads.insert(ParamRole::Kernel, grads.kernel);
        param_grads.insert(
            ParamRole::Bias,
            Tensor::from_vec(Shape::nhwc(1, 1, 1, grads.bias.len()), grads.bias)
                .expect("bias gradient length"),
        );
        Ok(BackwardOut {
            input_grads: vec![grads.input],
            param_grads: Some(param_grads),
        })
    }
}

struct ConvTransposeOp {
    kernel: usize,
    out_channels: usize,
}

impl<T: Element> LayerOp<T> for ConvTransposeOp {
    fn kind_name(&self) -> &'static str {
        "conv_transpose"
    }

    fn out_channels(&self, _in: &[usize]) -> usize {
        self.out_channels
    }

    fn param_shapes(&self, in_channels: &[usize]) -> Vec<(ParamRole, Shape)> {
        vec![
            (
                ParamRole::Kernel,
                Shape([self.kernel, self.kernel, in_channels[0], self.out_channels]),
            ),
            (ParamRole::Bias, Shape::nhwc(1, 1, 1, self.out_channels)),
        ]
    }

    fn is_conv(&self) -> bool {
        true
    }

    fn forward(
        &self,
        inputs: &[&Tensor<T>],
        params: &LayerParams<T>,
        _lcx: &LayerCtx,
    ) -> Result<ForwardOut<T>, crate::error::TensorError> {
        let kernel = params.required("conv_transpose", ParamRole::Kernel)?;
        let bias = params.required("conv_transpose", ParamRole::Bias)?;
        let out = ops::conv2d_transpose(inputs[0], kernel, bias.data())?;
        Ok(ForwardOut::plain(out))
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        params: &LayerParams<T>,
        _saved: &Saved<T>,
        grad_out: &Tensor<T>,
    ) -> Result<BackwardOut<T>, crate::error::TensorError> {
        let kernel = params.required("conv_transpose", ParamRole::Kernel)?;
        let grads = ops::conv2d_transpose_backward(inputs[0], kernel, grad_out)?;
        let mut param_grads = LayerParams::default();
        param_grads.insert(ParamRole::Kernel, grads.kernel);
        param_grads.insert(
            ParamRole::Bias,
            Tensor::from_vec(Shape::nhwc(1, 1, 1, grads.bias.len()), grads.bias)
                .expect("bias gradient length"),
        );
        Ok(BackwardOut {
            input_grads: vec![grads.input],
            param_grads: Some(param_grads),
        })
    }
}

struct BatchNormOp;

impl<T: Element> LayerOp<T> for BatchNormOp {
    fn kind_name(&self) -> &'static str {
        "bn"
    }

    fn out_channels(&self, in_channels: &[usize]) -> usize {
        in_channels[0]
    }

    fn param_shapes(&self, in_channels: &[usize]) -> Vec<(ParamRole, Shape)> {
        let c = Shape::nhwc(1, 1, 1, in_channels[0]);
        vec![
            (ParamRole::Gamma, c),
            (ParamRole::Beta, c),
            (ParamRole::RunningMean, c),
            (ParamRole::RunningVar, c),
        ]
    }

    fn forward(
        &self,
        inputs: &[&Tensor<T>],
        params: &LayerParams<T>,
        lcx: &LayerCtx,
    ) -> Result<ForwardOut<T>, crate::error::TensorError> {
        let gamma = params.required("bn", ParamRole::Gamma)?;
        let beta = params.required("bn", ParamRole::Beta)?;
        let rm = params.required("bn", ParamRole::RunningMean)?;
        let rv = params.required("bn", ParamRole::RunningVar)?;
        let fwd = ops::batch_norm(
            inputs[0],
            gamma.data(),
            beta.data(),
            rm.data(),
            rv.data(),
            T::from_f64(ops::BN_MOMENTUM),
            T::from_f64(ops::BN_EPSILON),
            lcx.ctx.mode,
        )?;
        let running_update = match lcx.ctx.mode {
            Mode::Train => Some((fwd.running_mean, fwd.running_var)),
            Mode::Inference => None,
        };
        Ok(ForwardOut {
            output: fwd.output,
            saved: Saved::Bn(fwd.saved),
            running_update,
        })
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        params: &LayerParams<T>,
        saved: &Saved<T>,
        grad_out: &Tensor<T>,
    ) -> Result<BackwardOut<T>, crate::error::TensorError> {
        let gamma = params.required("bn", ParamRole::Gamma)?;
        let Saved::Bn(bn_saved) = saved else {
            return Err(crate::error::TensorError::InvalidArgument {
                op: "bn",
                reason: "backward called without batch-norm forward state".into(),
            });
        };
        let grads = ops::batch_norm_backward(inputs[0], gamma.data(), bn_saved, grad_out)?;
        let c = grads.gamma.len();
        let mut param_grads = LayerParams::default();
        param_grads.insert(
            ParamRole::Gamma,
            Tensor::from_vec(Shape::nhwc(1, 1, 1, c), grads.gamma).expect("gamma gradient length"),
        );
        param_grads.insert(
            ParamRole::Beta,
            Tensor::from_vec(Shape::nhwc(1, 1, 1, c), grads.beta).expect("beta gradient length"),
        );
        Ok(BackwardOut {
            input_grads: vec![grads.input],
            param_grads: Some(param_grads),
        })
    }
}

struct ReluOp;

impl<T: Element> LayerOp<T> for ReluOp {
    fn kind_name(&self) -> &'static str {
        "relu"
    }

    fn out_channels(&self, in_channels: &[usize]) -> usize {
        in_channels[0]
    }

    fn forward(
        &self,
        inputs: &[&Tensor<T>],
        _params: &LayerParams<T>,
        _lcx: &LayerCtx,
    ) -> Result<ForwardOut<T>, crate::error::TensorError> {
        Ok(ForwardOut::plain(ops::relu(inputs[0])))
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        _params: &LayerParams<T >,
        _saved: &Saved<T>,
        grad_out: &Tensor<T>,
    ) -> Result<BackwardOut<T>, crate::error::TensorError> {
        Ok(BackwardOut {
            input_grads: vec![ops::relu_backward(inputs[0], grad_out)],
            param_grads: None,
        })
    }
}

struct SigmoidOp;

impl<T: Element> LayerOp<T> for SigmoidOp {
    fn kind_name(&self) -> &'static str {
        "sigmoid"
    }

    fn out_channels(&self, in_channels: &[usize]) -> usize {
        in_channels[0]
    }

    fn forward(
        &self,
        inputs: &[&Tensor<T>],
        _params: &LayerParams<T>,
        _lcx: &LayerCtx,
    ) -> Result<ForwardOut<T>, crate::error::TensorError> {
        Ok(ForwardOut::plain(ops::sigmoid(inputs[0])))
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        _params: &LayerParams<T>,
        _saved: &Saved<T>,
        grad_out: &Tensor<T>,
    ) -> Result<BackwardOut<T>, crate::error::TensorError> {
        Ok(BackwardOut {
            input_grads: vec![ops::sigmoid_backward(output, grad_out)],
            param_grads: None,
        })
    }
}

struct DropoutOp {
    rate: f64,
}

impl<T: Element> LayerOp<T> for DropoutOp {
    fn kind_name(&self) -> &'static str {
        "dropout"
    }

    fn out_channels(&self, in_channels: &[usize]) -> usize {
        in_channels[0]
    }

    fn forward(
        &self,
        inputs: &[&Tensor<T>],
        _params: &LayerParams<T>,
        lcx: &LayerCtx,
    ) -> Result<ForwardOut<T>, crate::error::TensorError> {
        let out = ops::dropout(inputs[0], T::from_f64(self.rate), &lcx.ctx)?;
        Ok(ForwardOut {
            output: out,
            saved: Saved::Dropout(lcx.ctx),
            running_update: None,
        })
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        _params: &LayerParams<T>,
        saved: &Saved<T>,
        grad_out: &Tensor<T>,
    ) -> Result<BackwardOut<T>, crate::error::TensorError> {
        let Saved::Dropout(ctx) = saved else {
            return Err(crate::error::TensorError::InvalidArgument {
                op: "dropout",
                reason: "backward called without dropout forward state".into(),
            });
        };
        Ok(BackwardOut {
            input_grads: vec![ops::dropout_backward(grad_out, T::from_f64(self.rate), ctx)?],
            param_grads: None,
        })
    }
}

struct MaxPoolOp {
    pool: usize,
}

impl<T: Element> LayerOp<T> for MaxPoolOp {
    fn kind_name(&self) -> &'static str {
        "maxpool"
    }

    fn out_channels(&self, in_channels: &[usize]) -> usize {
        in_channels[0]
    }

    fn forward(
        &self,
        inputs: &[&Tensor<T>],
        _params: &LayerParams<T>,
        _lcx: &LayerCtx,
    ) -> Result<ForwardOut<T>, crate::error::TensorError> {
        let (out, cache) = ops::max_pool(inputs[0], self.pool)?;
        Ok(ForwardOut {
            output: out,
            saved: Saved::Pool(cache),
            running_update: None,
        })
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        _params: &LayerParams<T>,
        saved: &Saved<T>,
        grad_out: &Tensor<T>,
    ) -> Result<BackwardOut<T>, crate::error::TensorError> {
        let Saved::Pool(cache) = saved else {
            return Err(crate::error::TensorError::InvalidArgument {
                op: "maxpool",
                reason: "backward called without pooled index cache".into(),
            });
        };
        Ok(BackwardOut {
            input_grads: vec![ops::max_pool_backward(cache, grad_out)?],
            param_grads: None,
        })
    }
}

struct UpsampleOp {
    factor: usize,
}

impl<T: Element> LayerOp<T> for UpsampleOp {
    fn kind_name(&self) -> &'static str {
        "upsample"
    }

    fn out_channels(&self, in_channels: &[usize]) -> usize {
        in_channels[0]
    }

    fn forward(
        &self,
        inputs: &[&Tensor<T>],
        _params: &LayerParams<T>,
        _lcx: &LayerCtx,
    ) -> Result<ForwardOut<T>, crate::error::TensorError> {
        Ok(ForwardOut::plain(ops::upsample_nearest(
            inputs[0],
            self.factor,
        )))
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        _params: &LayerParams<T>,
        _saved: &Saved<T>,
        grad_out: &Tensor<T>,
    ) -> Result<BackwardOut<T>, crate::error::TensorError> {
        Ok(BackwardOut {
            input_grads: vec![ops::upsample_nearest_backward(grad_out, self.factor)?],
            param_grads: None,
        })
    }
}

struct ZeroPadOp;

impl<T: Element> LayerOp<T> for ZeroPadOp {
    fn kind_name(&self) -> &'static str {
        "zeropad"
    }

    fn out_channels(&self, in_channels: &[usize]) -> usize {
        in_channels[0]
    }

    fn forward(
        &self,
        inputs: &[&Tensor<T>],
        _params: &LayerParams<T>,
        lcx: &LayerCtx,
    ) -> Result<ForwardOut<T>, crate::error::TensorError> {
        Ok(ForwardOut::plain(ops::zero_pad(
            inputs[0], lcx.full_h, lcx.full_w,
        )?))
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        _params: &LayerParams<T>,
        _saved: &Saved<T>,
        grad_out: &Tensor<T>,
    ) -> Result<BackwardOut<T>, crate::error::TensorError> {
        Ok(BackwardOut {
            input_grads: vec![ops::zero_pad_backward(grad_out, inputs[0].shape())?],
            param_grads: None,
        })
    }
}

struct ConcatOp;

impl<T: Element> LayerOp<T> for ConcatOp {
    fn kind_name(&self) -> &'static str {
        "concat"
    }

    fn out_channels(&self, in_channels: &[usize]) -> usize {
        in_channels.iter().sum()
    }

    fn arity(&self) -> Option<usize> {
        None
    }

    fn forward(
        &self,
        inputs: &[&Tensor<T>],
        _params: &LayerParams<T>,
        _lcx: &LayerCtx,
    ) -> Result<ForwardOut<T>, crate::error::TensorError> {
        Ok(ForwardOut::plain(ops::concat_channels(inputs)?))
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        _params: &LayerParams<T>,
        _saved: &Saved<T>,
        grad_out: &Tensor<T>,
    ) -> Result<BackwardOut<T>, crate::error::TensorError> {
        let channels: Vec<usize> = inputs.iter().map(|t| t.shape().c()).collect();
        Ok(BackwardOut {
            input_grads: ops::concat_channels_backward(grad_out, &channels)?,
            param_grads: None,
        })
    }
}

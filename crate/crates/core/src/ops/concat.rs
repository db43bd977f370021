//! Channel concatenation, the dense-connectivity primitive.

use crate::error::TensorError;
use crate::tensor::{Element, Shape, Tensor};

/// Stacks tensors along the channel axis in argument order.
pub fn concat_channels<T: Element>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>, TensorError> {
    if inputs.is_empty() {
        return Err(TensorError::InvalidArgument {
            op: "concat_channels",
            reason: "no inputs".into(),
        });
    }
    let first = inputs[0].shape();
    let mut c_total = 0;
    for t in inputs {
        let s = t.shape();
        if s.n() != first.n() || s.h() != first.h() || s.w() != first.w() {
            return Err(TensorError::ShapeMismatch {
                context: "concat_channels spatial/batch dims".into(),
                expected: first,
                got: s,
            });
        }
        c_total += s.c();
    }
    let out_shape = Shape::nhwc(first.n(), first.h(), first.w(), c_total);
    let mut out = Tensor::zeros(out_shape);
    let pixels = first.n() * first.h() * first.w();
    let odata = out.data_mut();
    for p in 0..pixels {
        let mut offset = p * c_total;
        for t in inputs {
            let c = t.shape().c();
            odata[offset..offset + c].copy_from_slice(&t.data()[p * c..(p + 1) * c]);
            offset += c;
        }
    }
    Ok(out)
}

/// Slices the concatenated gradient back into one gradient per input.
pub fn concat_channels_backward<T: Element>(
    grad_out: &Tensor<T>,
    input_channels: &[usize],
) -> Result<Vec<Tensor<T>>, TensorError> {
    let s = grad_out.shape();
    let c_total: usize = input_channels.iter().sum();
    if s.c() != c_total {
        return Err(TensorError::InvalidArgument {
            op: "concat_channels_backward",
            reason: format!("gradient has {} channels, inputs sum to {c_total}", s.c()),
        });
    }
    let pixels = s.n() * s.h() * s.w();
    let mut grads: Vec<Tensor<T>> = input_channels
        .iter()
        .map(|&c| Tensor::zeros(Shape::nhwc(s.n(), s.h(), s.w(), c)))
        .collect();
    for p in 0..pixels {
        let mut offset = p * c_total;
        for (gi, &c) in grads.iter_mut().zip(input_channels) {
            gi.data_mut()[p * c..(p + 1) * c]
                .copy_from_slice(&grad_out.data()[offset..offset + c]);
            offset += c;
        }
    }
    Ok(grads)
}

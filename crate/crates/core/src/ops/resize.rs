//! Nearest-neighbor upsampling and bottom/right zero padding.

use crate::error::TensorError;
use crate::tensor::{Element, Shape, Tensor};

/// Replicates each input cell into a `factor x factor` block.
pub fn upsample_nearest<T: Element>(input: &Tensor<T>, factor: usize) -> Tensor<T> {
    let s = input.shape();
    let out_shape = Shape::nhwc(s.n(), s.h() * factor, s.w() * factor, s.c());
    let mut out = Tensor::zeros(out_shape);
    let c = s.c();
    for n in 0..s.n() {
        for oy in 0..out_shape.h() {
            let iy = oy / factor;
            for ox in 0..out_shape.w() {
                let ix = ox / factor;
                let src = ((n * s.h() + iy) * s.w() + ix) * c;
                let dst = ((n * out_shape.h() + oy) * out_shape.w() + ox) * c;
                let (src_px, dst_px) = (&input.data()[src..src + c], dst);
                out.data_mut()[dst_px..dst_px + c].copy_from_slice(src_px);
            }
        }
    }
    out
}

/// Sums each `factor x factor` block of the output gradient back onto its
/// source cell.
pub fn upsample_nearest_backward<T: Element>(
    grad_out: &Tensor<T>,
    factor: usize,
) -> Result<Tensor<T>, TensorError> {
    let s = grad_out.shape();
    if !s.h().is_multiple_of(factor) || !s.w().is_multiple_of(factor) {
        return Err(TensorError::InvalidArgument {
            op: "upsample_nearest_backward",
            reason: format!(
                "gradient dims {}x{} not divisible by factor {factor}",
                s.h(),
                s.w()
            ),
        });
    }
    let in_shape = Shape::nhwc(s.n(), s.h() / factor, s.w() / factor, s.c());
    let mut grad_in = Tensor::zeros(in_shape);
    let c = s.c();
    for n in 0..s.n() {
        for oy in 0..s.h() {
            let iy = oy / factor;
            for ox in 0..s.w() {
                let ix = ox / factor;
                let src = ((n * s.h() + oy) * s.w() + ox) * c;
                let dst = ((n * in_shape.h() + iy) * in_shape.w() + ix) * c;
                for k in 0..c {
                    grad_in.data_mut()[dst + k] =
                        grad_in.data_mut()[dst + k] + grad_out.data()[src + k];
                }
            }
        }
    }
    Ok(grad_in)
}

/// Pads with zero rows at the bottom and zero columns at the right until
/// the tensor reaches `target_h x target_w`.
pub fn zero_pad<T: Element>(
    input: &Tensor<T>,
    target_h: usize,
    target_w: usize,
) -> Result<Tensor<T>, TensorError> {
    let s = input.shape();
    if target_h < s.h() || target_w < s.w() {
        return Err(TensorError::InvalidArgument {
            op: "zero_pad",
            reason: format!(
                "target {target_h}x{target_w} smaller than input {}x{}",
                s.h(),
                s.w()
            ),
        });
    }
    let out_shape = Shape::nhwc(s.n(), target_h, target_w, s.c());
    let mut out = Tensor::zeros(out_shape);
    let row = s.w() * s.c();
    for n in 0..s.n() {
        for y in 0..s.h() {
            let src = (n * s.h() + y) * row;
            let dst = ((n * target_h + y) * target_w) * s.c();
            out.data_mut()[dst..dst + row].copy_from_slice(&input.data()[src..src + row]);
        }
    }
    Ok(out)
}

/// Crops the gradient back to the unpadded region.
pub fn zero_pad_backward<T: Element>(
    grad_out: &Tensor<T>,
    input_shape: Shape,
) -> Result<Tensor<T>, TensorError> {
    let s = grad_out.shape();
    if s.h() < input_shape.h() || s.w() < input_shape.w() || s.n() != input_shape.n() {
        return Err(TensorError::ShapeMismatch {
            context: "zero_pad_backward".into(),
            expected: input_shape,
            got: s,
        });
    }
    let mut grad_in = Tensor::zeros(input_shape);
    let row = input_shape.w() * input_shape.c();
    for n in 0..input_shape.n() {
        for y in 0..input_shape.h() {
            let src = ((n * s.h() + y) * s.w()) * s.c();
            let dst = (n * input_shape.h() + y) * row;
            grad_in.data_mut()[dst..dst + row].copy_from_slice(&grad_out.data()[src..src + row]);
        }
    }
    Ok(grad_in)
}

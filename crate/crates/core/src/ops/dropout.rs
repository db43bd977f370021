//! Inverted dropout with counter-based masks.
//!
//! The mask for element `i` is a pure function of `(rng_seed,
//! rng_stream_id, i)`, so a given context always produces the same mask and
//! the backward pass can regenerate it instead of storing it. Survivors are
//! scaled by `1/(1-rate)` at train time, which makes inference an exact
//! identity.

use crate::error::TensorError;
use crate::rng;
use crate::tensor::{Element, Mode, OpContext, Tensor};

fn check_rate<T: Element>(rate: T) -> Result<(), TensorError> {
    let r = rate.as_f64();
    if !(0.0..1.0).contains(&r) {
        return Err(TensorError::InvalidArgument {
            op: "dropout",
            reason: format!("rate {r} must be in [0, 1)"),
        });
    }
    Ok(())
}

/// Zeroes each element with probability `rate` in train mode; identity in
/// inference mode.
pub fn dropout<T: Element>(
    input: &Tensor<T>,
    rate: T,
    ctx: &OpContext,
) -> Result<Tensor<T>, TensorError> {
    check_rate(rate)?;
    if ctx.mode == Mode::Inference || rate == T::zero() {
        return Ok(input.clone());
    }
    let keep_scale = T::one() / (T::one() - rate);
    let r = rate.as_f64();
    let mut out = input.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if rng::uniform(ctx.rng_seed, ctx.rng_stream_id, i as u64) < r {
            *v = T::zero();
        } else {
            *v = *v * keep_scale;
        }
    }
    Ok(out)
}

/// Applies the same mask and scale to the gradient.
pub fn dropout_backward<T: Element>(
    grad_out: &Tensor<T>,
    rate: T,
    ctx: &OpContext,
) -> Result<Tensor<T>, TensorError> {
    dropout(grad_out, rate, ctx)
}

//! Batch normalization over the batch and spatial axes, per channel.

use crate::error::TensorError;
use crate::tensor::{Element, Mode, Tensor};

/// Running-average momentum from the network description.
pub const BN_MOMENTUM: f64 = 0.99;

/// Variance epsilon. Large enough to keep zero-variance channels (constant
/// synthetic inputs) numerically stable.
pub const BN_EPSILON: f64 = 1e-3;

/// Statistics the forward pass used, needed again by the backward pass.
#[derive(Clone, Debug)]
pub struct BnSaved<T> {
    pub mode: Mode,
    /// Mean actually used for normalization (batch mean in train mode,
    /// running mean in inference).
    pub mean: Vec<T>,
    /// Variance actually used for normalization (biased batch variance in
    /// train mode, running variance in inference).
    pub var: Vec<T>,
    pub epsilon: T,
}

/// Forward result: normalized output plus the running statistics after the
/// momentum update (unchanged copies in inference mode).
#[derive(Debug)]
pub struct BnForward<T: Element> {
    pub output: Tensor<T>,
    pub saved: BnSaved<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// Gradients with respect to the input and the affine parameters.
pub struct BnGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

fn check_params<T>(
    op: &'static str,
    c: usize,
    params: &[(&'static str, &[T])],
) -> Result<(), TensorError> {
    for (name, p) in params {
        if p.len() != c {
            return Err(TensorError::ParamLength {
                op,
                name,
                len: p.len(),
                expected: c,
            });
        }
    }
    Ok(())
}

/// `out = gamma * (x - mean) / sqrt(var + eps) + beta`. Train mode uses
/// batch statistics (mean and biased variance over N, H, W) and folds them
/// into the running averages as `r <- momentum * r + (1 - momentum) * stat`;
/// inference mode uses the running statistics unchanged.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm<T: Element>(
    input: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    momentum: T,
    epsilon: T,
    mode: Mode,
) -> Result<BnForward<T>, TensorError> {
    let c = input.shape().c();
    check_params(
        "batch_norm",
        c,
        &[
            ("gamma", gamma),
            ("beta", beta),
            ("running_mean", running_mean),
            ("running_var", running_var),
        ],
    )?;

    let (mean, var) = match mode {
        Mode::Train => batch_stats(input),
        Mode::Inference => (
            running_mean.iter().map(|v| v.as_f64()).collect(),
            running_var.iter().map(|v| v.as_f64()).collect(),
        ),
    };

    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + epsilon.as_f64()).sqrt()).collect();
    let mut out = input.clone();
    for px in out.data_mut().chunks_exact_mut(c) {
        for (k, v) in px.iter_mut().enumerate() {
            let xhat = (v.as_f64() - mean[k]) * inv_std[k];
            *v = T::from_f64(gamma[k].as_f64() * xhat + beta[k].as_f64());
        }
    }

    let (new_mean, new_var) = match mode {
        Mode::Train => {
            let m = momentum.as_f64();
            let fold = |run: &[T], stat: &[f64]| {
                run.iter()
                    .zip(stat)
                    .map(|(r, &s)| T::from_f64(m * r.as_f64() + (1.0 - m) * s))
                    .collect::<Vec<T>>()
            };
            (fold(running_mean, &mean), fold(running_var, &var))
        }
        Mode::Inference => (running_mean.to_vec(), running_var.to_vec()),
    };

    Ok(BnForward {
        output: out,
        saved: BnSaved {
            mode,
            mean: mean.iter().map(|&v| T::from_f64(v)).collect(),
            var: var.iter().map(|&v| T::from_f64(v)).collect(),
            epsilon,
        },
        running_mean: new_mean,
        running_var: new_var,
    })
}

/// Per-channel mean and biased variance over N, H, W, accumulated in f64.
fn batch_stats<T: Element>(input: &Tensor<T>) -> (Vec<f64>, Vec<f64>) {
    let c = input.shape().c();
    let m = (input.len() / c) as f64;
    let mut mean = vec![0.0f64; c];
    for px in input.data().chunks_exact(c) {
        for (k, v) in px.iter().enumerate() {
            mean[k] += v.as_f64();
        }
    }
    for v in &mut mean {
        *v /= m;
    }
    let mut var = vec![0.0f64; c];
    for px in input.data().chunks_exact(c) {
        for (k, v) in px.iter().enumerate() {
            let d = v.as_f64() - mean[k];
            var[k] += d * d;
        }
    }
    for v in &mut var {
        *v /= m;
    }
    (mean, var)
}

/// Exact gradients through the statistics used in the forward pass. In
/// train mode the batch mean and variance are functions of the input, which
/// yields the full three-term expression; in inference mode the statistics
/// are constants.
pub fn batch_norm_backward<T: Element>(
    input: &Tensor<T>,
    gamma: &[T],
    saved: &BnSaved<T>,
    grad_out: &Tensor<T>,
) -> Result<BnGrads<T>, TensorError> {
    let c = input.shape().c();
    check_params("batch_norm_backward", c, &[("gamma", gamma)])?;
    if grad_out.shape() != input.shape() {
        return Err(TensorError::ShapeMismatch {
            context: "batch_norm_backward grad_out".into(),
            expected: input.shape(),
            got: grad_out.shape(),
        });
    }
    let m = (input.len() / c) as f64;
    let eps = saved.epsilon.as_f64();
    let inv_std: Vec<f64> = saved
        .var
        .iter()
        .map(|v| 1.0 / (v.as_f64() + eps).sqrt())
        .collect();
    let mean: Vec<f64> = saved.mean.iter().map(|v| v.as_f64()).collect();

    // per-channel sums of dy and dy * xhat
    let mut sum_dy = vec![0.0f64; c];
    let mut sum_dy_xhat = vec![0.0f64; c];
    for (px, gpx) in input
        .data()
        .chunks_exact(c)
        .zip(grad_out.data().chunks_exact(c))
    {
        for k in 0..c {
            let dy = gpx[k].as_f64();
            let xhat = (px[k].as_f64() - mean[k]) * inv_std[k];
            sum_dy[k] += dy;
            sum_dy_xhat[k] += dy * xhat;
        }
    }

    let mut grad_in = Tensor::zeros(input.shape());
    match saved.mode {
        Mode::Train => {
            for ((px, gpx), opx) in input
                .data()
                .chunks_exact(c)
                .zip(grad_out.data().chunks_exact(c))
                .zip(grad_in.data_mut().chunks_exact_mut(c))
            {
                for k in 0..c {
                    let dy = gpx[k].as_f64();
                    let xhat = (px[k].as_f64() - mean[k]) * inv_std[k];
                    let g = gamma[k].as_f64() * inv_std[k]
                        * (dy - sum_dy[k] / m - xhat * sum_dy_xhat[k] / m);
                    opx[k] = T::from_f64(g);
                }
            }
        }
        Mode::Inference => {
            for (gpx, opx) in grad_out
                .data()
                .chunks_exact(c)
                .zip(grad_in.data_mut().chunks_exact_mut(c))
            {
                for k in 0..c {
                    opx[k] = T::from_f64(gpx[k].as_f64() * gamma[k].as_f64() * inv_std[k]);
                }
            }
        }
    }

    Ok(BnGrads {
        input: grad_in,
        gamma: sum_dy_xhat.iter().map(|&v| T::from_f64(v)).collect(),
        beta: sum_dy.iter().map(|&v| T::from_f64(v)).collect(),
    })
}

//! Max pooling over non-overlapping windows with recorded argmax indices.

use crate::error::TensorError;
use crate::tensor::{Element, Shape, Tensor};

/// Flat input indices of the maxima found by the forward pass; the backward
/// pass routes gradients through them.
#[derive(Clone, Debug)]
pub struct PoolIndexCache {
    pub input_shape: Shape,
    pub output_shape: Shape,
    /// One flat index into the pre-pool input per pooled output element.
    pub argmax: Vec<u32>,
}

/// Max over non-overlapping `pool x pool` windows. Trailing rows/columns
/// beyond the last full window are dropped (floor semantics), so
/// `H -> floor(H/pool)`. Ties resolve to the first element in scan order.
pub fn max_pool<T: Element>(
    input: &Tensor<T>,
    pool: usize,
) -> Result<(Tensor<T>, PoolIndexCache), TensorError> {
    let s = input.shape();
    if pool < 1 {
        return Err(TensorError::InvalidArgument {
            op: "max_pool",
            reason: format!("pool size {pool} must be >= 1"),
        });
    }
    if s.h() < pool || s.w() < pool {
        return Err(TensorError::InvalidArgument {
            op: "max_pool",
            reason: format!("spatial dims {}x{} smaller than pool {pool}", s.h(), s.w()),
        });
    }
    assert!(s.len() <= u32::MAX as usize, "tensor too large for pool index cache");

    let (oh, ow) = (s.h() / pool, s.w() / pool);
    let out_shape = Shape::nhwc(s.n(), oh, ow, s.c());
    let mut out = Tensor::zeros(out_shape);
    let mut argmax = vec![0u32; out_shape.len()];
    let idata = input.data();

    for n in 0..s.n() {
        for oy in 0..oh {
            for ox in 0..ow {
                for c in 0..s.c() {
                    let mut best = T::neg_infinity();
                    let mut best_idx = 0u32;
                    for dy in 0..pool {
                        let y = oy * pool + dy;
                        for dx in 0..pool {
                            let x = ox * pool + dx;
                            let idx = ((n * s.h() + y) * s.w() + x) * s.c() + c;
                            let v = idata[idx];
                            if v > best {
                                best = v;
                                best_idx = idx as u32;
                            }
                        }
                    }
                    let o = ((n * oh + oy) * ow + ox) * s.c() + c;
                    out.data_mut()[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    Ok((
        out,
        PoolIndexCache {
            input_shape: s,
            output_shape: out_shape,
            argmax,
        },
    ))
}

/// Routes the pooled gradient back to the recorded argmax positions; all
/// other input positions receive zero.
pub fn max_pool_backward<T: Element>(
    cache: &PoolIndexCache,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, TensorError> {
    if grad_out.shape() != cache.output_shape {
        return Err(TensorError::ShapeMismatch {
            context: "max_pool_backward grad_out".into(),
            expected: cache.output_shape,
            got: grad_out.shape(),
        });
    }
    let mut grad_in = Tensor::zeros(cache.input_shape);
    let gi = grad_in.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        gi[idx as usize] = gi[idx as usize] + g;
    }
    Ok(grad_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::rand_tensor;

    #[test]
    fn single_window_max_of_range() {
        let data: Vec<f32> = (0..64).map(|v| v as f32).collect();
        let input = Tensor::from_vec(Shape::nhwc(1, 8, 8, 1), data).unwrap();
        let (out, cache) = max_pool(&input, 8).unwrap();
        assert_eq!(out.shape(), Shape::nhwc(1, 1, 1, 1));
        assert_eq!(out.data(), &[63.0]);
        assert_eq!(cache.argmax, vec![63]);
    }

    #[test]
    fn floor_semantics_drops_trailing_rows() {
        let input = Tensor::<f32>::zeros(Shape::nhwc(1, 540, 16, 1));
        let (out, _) = max_pool(&input, 8).unwrap();
        assert_eq!(out.shape().h(), 67);
        assert_eq!(out.shape().w(), 2);
    }

    #[test]
    fn matches_per_window_scan_oracle() {
        let input = rand_tensor::<f32>(Shape::nhwc(1, 16, 16, 2), 77);
        let (out, _) = max_pool(&input, 8).unwrap();
        // exhaustive per-window max
        for oy in 0..2 {
            for ox in 0..2 {
                for c in 0..2 {
                    let mut best = f32::NEG_INFINITY;
                    for y in oy * 8..oy * 8 + 8 {
                        for x in ox * 8..ox * 8 + 8 {
                            best = best.max(input.at(0, y, x, c));
                        }
                    }
                    assert_eq!(out.at(0, oy, ox, c), best);
                }
            }
        }
    }

    #[test]
    fn rejects_input_smaller_than_window() {
        let input = Tensor::<f32>::zeros(Shape::nhwc(1, 7, 8, 1));
        assert!(max_pool(&input, 8).is_err());
    }

    #[test]
    fn backward_routes_to_argmax_only() {
        let mut input = Tensor::<f32>::zeros(Shape::nhwc(1, 8, 8, 1));
        input.set(0, 3, 5, 0, 9.0);
        let (_, cache) = max_pool(&input, 8).unwrap();
        let grad_out = Tensor::from_vec(Shape::nhwc(1, 1, 1, 1), vec![2.5]).unwrap();
        let grad_in = max_pool_backward(&cache, &grad_out).unwrap();
        let mut total = 0.0;
        for v in grad_in.data() {
            total += v;
        }
        assert_eq!(total, 2.5);
        assert_eq!(grad_in.at(0, 3, 5, 0), 2.5);
    }
}

//! Central-difference gradient checking at f64.
//!
//! An operator under check is wrapped as a closure over a set of named
//! input tensors. The harness scalarizes the output with a sum-loss,
//! differentiates it numerically element by element, and compares against
//! the analytic gradients the caller supplies.

use std::fmt;

use crate::tensor::Tensor;

/// Central-difference step. At f64 this balances truncation (O(h^2))
/// against round-off for unit-scale values.
pub const FD_STEP: f64 = 1e-5;

/// Closure producing the analytic gradients of `sum(forward(inputs))`, one
/// per input tensor.
pub type AnalyticFn<'a> = &'a dyn Fn(&[Tensor<f64>]) -> Vec<Tensor<f64>>;

/// Relative error floor: differences below this scale are compared against
/// the floor instead of the (near-zero) gradient magnitudes, which keeps
/// finite-difference round-off from masquerading as large relative error.
const REL_FLOOR: f64 = 1e-2;

/// Result for one checked input tensor.
#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub non_finite: bool,
}

/// Per-input maxima of the analytic-vs-numeric comparison.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries
            .iter()
            .all(|e| !e.non_finite && e.max_rel_err < self.tolerance)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_err)
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(
                f,
                "input={} max_rel_err={:.3e} max_abs_err={:.3e} non_finite={} pass={}",
                e.name,
                e.max_rel_err,
                e.max_abs_err,
                e.non_finite,
                !e.non_finite && e.max_rel_err < self.tolerance
            )?;
        }
        writeln!(f, "tolerance={:.3e} pass={}", self.tolerance, self.passed())
    }
}

/// Checks the gradients of `sum(forward(inputs))`.
///
/// `analytic` must return one gradient tensor per input, each the exact
/// shape of its input. `forward` is re-evaluated `2 * total_elements`
/// times, so keep inputs small.
pub fn grad_check(
    forward: &dyn Fn(&[Tensor<f64>]) -> Tensor<f64>,
    analytic: AnalyticFn<'_>,
    inputs: &[(&str, Tensor<f64>)],
    tolerance: f64,
) -> GradCheckReport {
    let tensors: Vec<Tensor<f64>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let grads = analytic(&tensors);
    assert_eq!(
        grads.len(),
        inputs.len(),
        "analytic must return one gradient per input"
    );

    let mut entries = Vec::with_capacity(inputs.len());
    for (which, (name, _)) in inputs.iter().enumerate() {
        let mut max_rel = 0.0f64;
        let mut max_abs = 0.0f64;
        let mut non_finite = false;
        for elem in 0..tensors[which].len() {
            let mut plus = tensors.clone();
            plus[which].data_mut()[elem] += FD_STEP;
            let mut minus = tensors.clone();
            minus[which].data_mut()[elem] -= FD_STEP;
            let fd = (forward(&plus).sum_f64() - forward(&minus).sum_f64()) / (2.0 * FD_STEP);
            let a = grads[which].data()[elem];
            if !fd.is_finite() || !a.is_finite() {
                non_finite = true;
                continue;
            }
            let abs = (a - fd).abs();
            let rel = abs / a.abs().max(fd.abs()).max(REL_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        entries.push(GradCheckEntry {
            name: name.to_string(),
            max_rel_err: max_rel,
            max_abs_err: max_abs,
            non_finite,
        });
    }
    GradCheckReport { tolerance, entries }
}

/// Packs a bias/parameter vector as a `[1,1,1,C]` tensor for the harness.
pub fn vec_as_tensor(v: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(crate::tensor::Shape::nhwc(1, 1, 1, v.len()), v.to_vec())
        .expect("length matches by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops;
    use crate::tensor::{Mode, OpContext, Shape, Tensor};
    use crate::test_util::{rand_tensor, rand_vec};

    fn ones_like(t: &Tensor<f64>) -> Tensor<f64> {
        Tensor::filled(t.shape(), 1.0)
    }

    #[test]
    fn concat_is_exact_to_machine_epsilon() {
        let a = rand_tensor::<f64>(Shape::nhwc(1, 3, 3, 2), 1);
        let b = rand_tensor::<f64>(Shape::nhwc(1, 3, 3, 3), 2);
        let report = grad_check(
            &|xs| ops::concat_channels(&[&xs[0], &xs[1]]).unwrap(),
            &|xs| {
                let out = ops::concat_channels(&[&xs[0], &xs[1]]).unwrap();
                ops::concat_channels_backward(&ones_like(&out), &[2, 3]).unwrap()
            },
            &[("a", a), ("b", b)],
            1e-4,
        );
        assert!(report.passed(), "{report}");
        // linear op: only FD round-off remains
        assert!(report.max_rel_err() < 1e-9, "{report}");
    }

    #[test]
    fn conv2d_gradients_all_dilations() {
        for dilation in 1..=4 {
            let input = rand_tensor::<f64>(Shape::nhwc(1, 6, 6, 2), 10 + dilation as u64);
            let kernel = rand_tensor::<f64>(Shape([3, 3, 2, 2]), 20 + dilation as u64);
            let bias = vec_as_tensor(&rand_vec::<f64>(2, 30 + dilation as u64));
            let fwd = move |xs: &[Tensor<f64>]| {
                ops::conv2d(&xs[0], &xs[1], xs[2].data(), dilation).unwrap()
            };
            let report = grad_check(
                &fwd,
                &|xs| {
                    let out = fwd(xs);
                    let g = ops::conv2d_backward(&xs[0], &xs[1], dilation, &ones_like(&out))
                        .unwrap();
                    vec![g.input, g.kernel, vec_as_tensor(&g.bias)]
                },
                &[("input", input), ("kernel", kernel), ("bias", bias)],
                1e-4,
            );
            assert!(report.passed(), "dilation {dilation}:\n{report}");
        }
    }

    #[test]
    fn conv2d_transpose_gradients() {
        let input = rand_tensor::<f64>(Shape::nhwc(1, 5, 5, 3), 40);
        let kernel = rand_tensor::<f64>(Shape([3, 3, 3, 2]), 41);
        let bias = vec_as_tensor(&rand_vec::<f64>(2, 42));
        let fwd =
            |xs: &[Tensor<f64>]| ops::conv2d_transpose(&xs[0], &xs[1], xs[2].data()).unwrap();
        let report = grad_check(
            &fwd,
            &|xs| {
                let out = fwd(xs);
                let g = ops::conv2d_transpose_backward(&xs[0], &xs[1], &ones_like(&out)).unwrap();
                vec![g.input, g.kernel, vec_as_tensor(&g.bias)]
            },
            &[("input", input), ("kernel", kernel), ("bias", bias)],
            1e-4,
        );
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn max_pool_gradients() {
        let input = rand_tensor::<f64>(Shape::nhwc(1, 8, 8, 2), 50);
        let fwd = |xs: &[Tensor<f64>]| ops::max_pool(&xs[0], 8).unwrap().0;
        let report = grad_check(
            &fwd,
            &|xs| {
                let (out, cache) = ops::max_pool(&xs[0], 8).unwrap();
                vec![ops::max_pool_backward(&cache, &ones_like(&out)).unwrap()]
            },
            &[("input", input)],
            1e-4,
        );
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn upsample_and_pad_gradients() {
        let input = rand_tensor::<f64>(Shape::nhwc(1, 3, 2, 2), 60);
        let fwd = |xs: &[Tensor<f64>]| {
            let up = ops::upsample_nearest(&xs[0], 2);
            ops::zero_pad(&up, 7, 5).unwrap()
        };
        let report = grad_check(
            &fwd,
            &|_| {
                let g = ops::zero_pad_backward(
                    &Tensor::filled(Shape::nhwc(1, 7, 5, 2), 1.0),
                    Shape::nhwc(1, 6, 4, 2),
                )
                .unwrap();
                vec![ops::upsample_nearest_backward(&g, 2).unwrap()]
            },
            &[("input", input)],
            1e-4,
        );
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn activation_gradients() {
        // keep values away from the relu kink so the finite difference is valid
        let mut input = rand_tensor::<f64>(Shape::nhwc(1, 4, 4, 3), 70);
        for v in input.data_mut() {
            if v.abs() < 1e-3 {
                *v += 0.01;
            }
        }
        let report = grad_check(
            &|xs| ops::relu(&xs[0]),
            &|xs| vec![ops::relu_backward(&xs[0], &ones_like(&xs[0]))],
            &[("input", input.clone())],
            1e-4,
        );
        assert!(report.passed(), "relu:\n{report}");

        let report = grad_check(
            &|xs| ops::sigmoid(&xs[0]),
            &|xs| {
                let y = ops::sigmoid(&xs[0]);
                vec![ops::sigmoid_backward(&y, &ones_like(&y))]
            },
            &[("input", input)],
            1e-4,
        );
        assert!(report.passed(), "sigmoid:\n{report}");
    }

    #[test]
    fn dropout_gradients_through_fixed_mask() {
        let input = rand_tensor::<f64>(Shape::nhwc(1, 4, 4, 3), 80);
        let ctx = OpContext {
            mode: Mode::Train,
            rng_seed: 5,
            rng_stream_id: 9,
        };
        let report = grad_check(
            &|xs| ops::dropout(&xs[0], 0.2, &ctx).unwrap(),
            &|xs| vec![ops::dropout_backward(&ones_like(&xs[0]), 0.2, &ctx).unwrap()],
            &[("input", input)],
            1e-4,
        );
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn batch_norm_gradients_train_mode() {
        let input = rand_tensor::<f64>(Shape::nhwc(2, 4, 4, 3), 90);
        let gamma = rand_vec::<f64>(3, 91);
        let beta = rand_vec::<f64>(3, 92);
        let run = |xs: &[Tensor<f64>]| {
            ops::batch_norm(
                &xs[0],
                xs[1].data(),
                xs[2].data(),
                &[0.0; 3],
                &[1.0; 3],
                0.99,
                1e-3,
                Mode::Train,
            )
            .unwrap()
        };
        let report = grad_check(
            &|xs| run(xs).output,
            &|xs| {
                let fwd = run(xs);
                let g = ops::batch_norm_backward(
                    &xs[0],
                    xs[1].data(),
                    &fwd.saved,
                    &ones_like(&fwd.output),
                )
                .unwrap();
                vec![g.input, vec_as_tensor(&g.gamma), vec_as_tensor(&g.beta)]
            },
            &[
                ("input", input),
                ("gamma", vec_as_tensor(&gamma)),
                ("beta", vec_as_tensor(&beta)),
            ],
            1e-4,
        );
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn fault_injection_is_detected() {
        // a kernel gradient off by 1% must exceed the tolerance
        let input = rand_tensor::<f64>(Shape::nhwc(1, 6, 6, 2), 100);
        let kernel = rand_tensor::<f64>(Shape([3, 3, 2, 2]), 101);
        let bias = vec_as_tensor(&rand_vec::<f64>(2, 102));
        let fwd = |xs: &[Tensor<f64>]| ops::conv2d(&xs[0], &xs[1], xs[2].data(), 1).unwrap();
        let report = grad_check(
            &fwd,
            &|xs| {
                let out = fwd(xs);
                let g = ops::conv2d_backward(&xs[0], &xs[1], 1, &ones_like(&out)).unwrap();
                let corrupted = g.kernel.map(|v| v * 1.01);
                vec![g.input, corrupted, vec_as_tensor(&g.bias)]
            },
            &[("input", input), ("kernel", kernel), ("bias", bias)],
            1e-4,
        );
        assert!(!report.passed(), "corruption went undetected:\n{report}");
        let kernel_entry = &report.entries[1];
        assert!(kernel_entry.max_rel_err > 1e-4, "{report}");
    }
}

//! Property tests for the operator-level invariants.

use densemapnet_core::ops;
use densemapnet_core::tensor::{OpContext, Shape, Tensor};
use densemapnet_core::test_util::{rand_tensor, rand_tensor_in};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Stride-1 same-padding convolution preserves spatial dims for every
    /// dilation used by the network.
    #[test]
    fn conv_preserves_spatial_dims(
        h in 5usize..20,
        w in 5usize..20,
        dilation in 1usize..=4,
        seed in 0u64..1000,
    ) {
        let input = rand_tensor::<f32>(Shape::nhwc(1, h, w, 2), seed);
        let kernel = rand_tensor::<f32>(Shape([5, 5, 2, 3]), seed + 1);
        let out = ops::conv2d(&input, &kernel, &[0.0; 3], dilation).unwrap();
        prop_assert_eq!(out.shape(), Shape::nhwc(1, h, w, 3));

        let tk = rand_tensor::<f32>(Shape([9, 9, 2, 1]), seed + 2);
        let out = ops::conv2d_transpose(&input, &tk, &[0.0]).unwrap();
        prop_assert_eq!(out.shape(), Shape::nhwc(1, h, w, 1));
    }

    /// Pooling an upsampled constant recovers the constant exactly.
    #[test]
    fn pool_of_upsampled_constant_is_identity(
        h in 1usize..6,
        w in 1usize..6,
        value in -10.0f32..10.0,
    ) {
        let input = Tensor::filled(Shape::nhwc(1, h, w, 2), value);
        let up = ops::upsample_nearest(&input, 8);
        let (pooled, _) = ops::max_pool(&up, 8).unwrap();
        prop_assert_eq!(pooled.shape(), input.shape());
        prop_assert_eq!(pooled.data(), input.data());
    }

    /// Upsample-by-8 then zero-pad restores the original spatial dims for
    /// any input of at least 8x8.
    #[test]
    fn upsample_then_pad_restores_dims(h in 8usize..64, w in 8usize..64) {
        let pooled = Tensor::<f32>::zeros(Shape::nhwc(1, h / 8, w / 8, 1));
        let up = ops::upsample_nearest(&pooled, 8);
        let padded = ops::zero_pad(&up, h, w).unwrap();
        prop_assert_eq!(padded.shape(), Shape::nhwc(1, h, w, 1));
    }

    /// Concatenation sums channel counts, and slicing its gradient returns
    /// each input's gradient exactly.
    #[test]
    fn concat_channel_arithmetic_and_gradient_slicing(
        c1 in 1usize..8,
        c2 in 1usize..8,
        c3 in 1usize..8,
        seed in 0u64..1000,
    ) {
        let a = rand_tensor::<f32>(Shape::nhwc(1, 3, 4, c1), seed);
        let b = rand_tensor::<f32>(Shape::nhwc(1, 3, 4, c2), seed + 1);
        let c = rand_tensor::<f32>(Shape::nhwc(1, 3, 4, c3), seed + 2);
        let out = ops::concat_channels(&[&a, &b, &c]).unwrap();
        prop_assert_eq!(out.shape().c(), c1 + c2 + c3);

        // treat the concatenated values themselves as the gradient
        let grads = ops::concat_channels_backward(&out, &[c1, c2, c3]).unwrap();
        prop_assert_eq!(grads[0].data(), a.data());
        prop_assert_eq!(grads[1].data(), b.data());
        prop_assert_eq!(grads[2].data(), c.data());
    }

    /// Dropout is a bit-exact identity in inference mode for any rate.
    #[test]
    fn dropout_inference_identity(rate in 0.0f32..0.99, seed in 0u64..1000) {
        let input = rand_tensor::<f32>(Shape::nhwc(2, 4, 4, 3), seed);
        let out = ops::dropout(&input, rate, &OpContext::inference()).unwrap();
        prop_assert_eq!(out.data(), input.data());
    }

    /// Train-mode dropout preserves the expectation of the input (within
    /// three standard errors of the scaled Bernoulli mean).
    #[test]
    fn dropout_preserves_expectation(seed in 0u64..100) {
        let n = 200_000usize;
        let input = Tensor::filled(Shape::nhwc(1, 500, 400, 1), 1.0f64);
        let out = ops::dropout(&input, 0.2, &OpContext::train(seed, 0)).unwrap();
        let mean = out.sum_f64() / n as f64;
        let se = (0.2f64 * 0.8).sqrt() * 1.25 / (n as f64).sqrt();
        prop_assert!((mean - 1.0).abs() < 3.0 * se, "mean {}", mean);
    }

    /// Generated ground truth survives the normalize/denormalize cycle
    /// with zero end-point error against itself.
    #[test]
    fn synth_gt_self_consistency(seed in 0u64..200) {
        let samples = densemapnet_core::data::synth_generate(1, 24, 40, 16, seed).unwrap();
        let s = &samples[0];
        let (norm, clipped) =
            densemapnet_core::data::normalize_disparity(&s.disparity_gt, 16.0).unwrap();
        prop_assert_eq!(clipped, 0);
        let back = densemapnet_core::data::denormalize_disparity(&norm, 16.0);
        let e = densemapnet_core::eval::epe(&back, &s.disparity_gt, &s.valid_mask).unwrap();
        prop_assert_eq!(e, 0.0);
    }

    /// Valid disparities decode/normalize consistently through the 16-bit
    /// KITTI quantization: values stay within half a quantum.
    #[test]
    fn gray16_quantization_bound(seed in 0u64..200) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.png");
        let pred = rand_tensor_in::<f32>(Shape::nhwc(1, 4, 4, 1), 0.5, 250.0, seed);
        densemapnet_core::eval::emit_disparity_png(
            &pred,
            &path,
            densemapnet_core::eval::DisparityPngMode::Gray16,
        )
        .unwrap();
        let (decoded, _) = densemapnet_core::data::load_kitti_disparity(&path).unwrap();
        for (&a, &b) in pred.data().iter().zip(decoded.data()) {
            prop_assert!((f64::from(a) - f64::from(b)).abs() <= 1.0 / 512.0 + 1e-9);
        }
    }
}

//! Training: masked binary cross-entropy on normalized disparity, RMSprop
//! with per-step learning-rate decay, and the seeded epoch loop.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::save_checkpoint;
use crate::data::{denormalize_disparity, normalize_disparity, StereoSample};
use crate::error::{DataError, TrainError};
use crate::graph::{GradStore, ModelGraph, ParamRole};
use crate::tensor::{Shape, Tensor};

/// Predictions are clamped into `[CLAMP, 1 - CLAMP]` inside the loss so a
/// saturated sigmoid output cannot produce an infinite cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

/// All training hyperparameters in one auditable record.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Per-step learning-rate decay: `lr_t = lr / (1 + decay * t)`.
    pub decay: f64,
    /// RMSprop accumulator coefficient.
    pub rho: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Maximum disparity in pixels; normalizes ground truth into [0, 1].
    pub dmax: f64,
    /// Write a checkpoint every this many epochs (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            decay: 1e-6,
            rho: 0.9,
            epsilon: 1e-7,
            batch_size: 4,
            epochs: 500,
            seed: 1,
            dmax: 32.0,
            checkpoint_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(TrainError::InvalidConfig(format!(
                "rho {} must be in [0, 1)",
                self.rho
            )));
        }
        if self.batch_size < 1 {
            return Err(TrainError::InvalidConfig("batch size must be >= 1".into()));
        }
        if !(self.dmax > 0.0) {
            return Err(TrainError::InvalidConfig(format!(
                "dmax {} must be positive",
                self.dmax
            )));
        }
        if self.decay < 0.0 {
            return Err(TrainError::InvalidConfig(format!(
                "decay {} must be non-negative",
                self.decay
            )));
        }
        Ok(())
    }
}

/// Masked binary cross-entropy over normalized disparities.
///
/// ```text
/// loss = -sum(mask * (t*ln(p) + (1-t)*ln(1-p))) / sum(mask)
/// ```
///
/// with `p` clamped into `[1e-7, 1-1e-7]`. Returns the scalar loss and the
/// gradient with respect to the prediction, `mask*(p-t)/(p*(1-p)*sum(mask))`
/// under the same clamp.
pub fn bce_loss(
    pred: &Tensor<f32>,
    target: &Tensor<f32>,
    mask: &Tensor<f32>,
) -> Result<(f64, Tensor<f32>), TrainError> {
    if pred.shape() != target.shape() || pred.shape() != mask.shape() {
        return Err(TrainError::ShapeMismatch {
            pred: pred.shape(),
            target: target.shape(),
        });
    }
    let mask_sum: f64 = mask.sum_f64();
    if mask_sum <= 0.0 {
        return Err(TrainError::EmptyMask);
    }
    let mut loss = 0.0f64;
    let mut grad = Tensor::zeros(pred.shape());
    let g = grad.data_mut();
    for (i, ((&p, &t), &m)) in pred
        .data()
        .iter()
        .zip(target.data())
        .zip(mask.data())
        .enumerate()
    {
        if m == 0.0 {
            continue;
        }
        let p = f64::from(p).clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let t = f64::from(t);
        loss -= f64::from(m) * (t * p.ln() + (1.0 - t) * (1.0 - p).ln());
        g[i] = (f64::from(m) * (p - t) / (p * (1.0 - p) * mask_sum)) as f32;
    }
    Ok((loss / mask_sum, grad))
}

/// Per-parameter squared-gradient accumulators plus the global step count.
pub struct OptimizerState {
    /// Accumulators aligned with the graph's parameter visit order.
    v: Vec<Tensor<f32>>,
    /// Batch updates applied so far.
    pub t: u64,
}

impl OptimizerState {
    /// Zero accumulators for every trainable parameter of the graph.
    pub fn new(graph: &ModelGraph<f32>) -> Self {
        let mut v = Vec::new();
        graph.visit_params(|_, _, role, tensor| {
            if role.is_trainable() {
                v.push(Tensor::zeros(tensor.shape()));
            }
        });
        OptimizerState { v, t: 0 }
    }

    /// Learning rate the next step will use.
    pub fn current_lr(&self, cfg: &TrainConfig) -> f64 {
        cfg.learning_rate / (1.0 + cfg.decay * self.t as f64)
    }
}

/// One RMSprop update over every trainable parameter:
///
/// ```text
/// lr_t = lr / (1 + decay * t)
/// v    = rho * v + (1 - rho) * g^2
/// p    = p - lr_t * g / (sqrt(v) + eps)
/// ```
///
/// A non-finite gradient aborts the whole step before any parameter moves.
pub fn rmsprop_step(
    graph: &mut ModelGraph<f32>,
    grads: &GradStore<f32>,
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    // validate first: no partial updates on a poisoned gradient
    let mut bad: Option<(String, ParamRole)> = None;
    graph.visit_params(|id, name, role, _| {
        if bad.is_none() && role.is_trainable() {
            if let Some(g) = grads.get(id, role) {
                if g.data().iter().any(|v| !v.is_finite()) {
                    bad = Some((name.to_string(), role));
                }
            }
        }
    });
    if let Some((layer, role)) = bad {
        return Err(TrainError::NonFiniteGradient { layer, role });
    }

    let lr_t = state.current_lr(cfg);
    let (rho, eps) = (cfg.rho as f32, cfg.epsilon as f32);
    let lr = lr_t as f32;
    let mut slot = 0usize;
    let v_store = &mut state.v;
    graph.visit_params_mut(|id, _, role, param| {
        if !role.is_trainable() {
            return;
        }
        let v = &mut v_store[slot];
        slot += 1;
        match grads.get(id, role) {
            Some(g) => {
                for ((p, vv), &gv) in param
                    .data_mut()
                    .iter_mut()
                    .zip(v.data_mut())
                    .zip(g.data())
                {
                    *vv = rho * *vv + (1.0 - rho) * gv * gv;
                    *p -= lr * gv / (vv.sqrt() + eps);
                }
            }
            None => {
                // no gradient reached this parameter: accumulator decays
                for vv in v.data_mut() {
                    *vv *= rho;
                }
            }
        }
    });
    state.t += 1;
    Ok(())
}

/// One line of the training log.
#[derive(Clone, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    /// Valid-pixel-weighted mean BCE over the epoch.
    pub loss: f64,
    /// Train end-point error in pixels over the epoch.
    pub epe: f64,
    /// Learning rate after the epoch's updates.
    pub lr: f64,
    pub seconds: f64,
}

impl EpochStats {
    /// Machine-parseable log line; `with_timing` controls the seconds field.
    pub fn format_line(&self, with_timing: bool) -> String {
        let mut s = format!(
            "epoch={} loss={:.6} epe={:.4} lr={:.6e}",
            self.epoch, self.loss, self.epe, self.lr
        );
        if with_timing {
            s.push_str(&format!(" seconds={:.3}", self.seconds));
        }
        s
    }
}

/// Full training log, one entry per completed epoch.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

/// Optional behaviors of [`fit`].
#[derive(Default)]
pub struct FitOptions<'a> {
    /// Where checkpoints go; `None` disables checkpointing.
    pub checkpoint_path: Option<PathBuf>,
    /// Called after each epoch; return `true` to stop early.
    pub stop_after_epoch: Option<&'a mut dyn FnMut(&EpochStats) -> bool>,
    /// Called with each completed epoch's stats (for live logging).
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochStats)>,
}

/// Batched training tensors: images, normalized targets, pixel ground
/// truth, and the validity mask.
struct Batch {
    left: Tensor<f32>,
    right: Tensor<f32>,
    target: Tensor<f32>,
    gt_px: Tensor<f32>,
    mask: Tensor<f32>,
}

/// Assembles `[N,H,W,*]` batch tensors from a set of samples.
fn stack_batch(samples: &[&StereoSample], dmax: f64) -> Result<Batch, TrainError> {
    let s0 = samples[0].left.shape();
    let n = samples.len();
    let img_shape = Shape::nhwc(n, s0.h(), s0.w(), s0.c());
    let map_shape = Shape::nhwc(n, s0.h(), s0.w(), 1);
    let mut left = Tensor::zeros(img_shape);
    let mut right = Tensor::zeros(img_shape);
    let mut target = Tensor::zeros(map_shape);
    let mut gt_px = Tensor::zeros(map_shape);
    let mut mask = Tensor::zeros(map_shape);
    let img_len = s0.len();
    let map_len = map_shape.len() / n;
    for (i, s) in samples.iter().enumerate() {
        if s.left.shape() != s0 {
            return Err(TrainError::Data(DataError::InvalidSample(format!(
                "sample {} shape {} differs from batch shape {}",
                i,
                s.left.shape(),
                s0
            ))));
        }
        left.data_mut()[i * img_len..(i + 1) * img_len].copy_from_slice(s.left.data());
        right.data_mut()[i * img_len..(i + 1) * img_len].copy_from_slice(s.right.data());
        let (norm, _clipped) = normalize_disparity(&s.disparity_gt, dmax)?;
        target.data_mut()[i * map_len..(i + 1) * map_len].copy_from_slice(norm.data());
        gt_px.data_mut()[i * map_len..(i + 1) * map_len].copy_from_slice(s.disparity_gt.data());
        mask.data_mut()[i * map_len..(i + 1) * map_len].copy_from_slice(s.valid_mask.data());
    }
    Ok(Batch {
        left,
        right,
        target,
        gt_px,
        mask,
    })
}

/// Mini-batch training: per epoch, a seeded shuffle, batches of
/// `cfg.batch_size` (final partial batch kept), and for each batch a
/// train-mode forward, the BCE loss, backward, and one RMSprop step.
/// Checkpoints are written every `checkpoint_every` epochs and at the end.
/// A non-finite loss aborts immediately, leaving the last good checkpoint
/// in place.
pub fn fit(
    graph: &mut ModelGraph<f32>,
    samples: &[StereoSample],
    cfg: &TrainConfig,
    mut options: FitOptions<'_>,
) -> Result<TrainLog, TrainError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(TrainError::Data(DataError::EmptyDataset));
    }

    let mut log = TrainLog::default();
    let mut state = OptimizerState::new(graph);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut last_checkpoint: Option<String> = None;

    let write_checkpoint = |graph: &ModelGraph<f32>,
                            last: &mut Option<String>|
     -> Result<(), TrainError> {
        if let Some(path) = &options.checkpoint_path {
            save_checkpoint(graph, path)?;
            *last = Some(path.display().to_string());
        }
        Ok(())
    };

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_weighted = 0.0f64;
        let mut weight_total = 0.0f64;
        let mut abs_err_px = 0.0f64;

        for batch_ids in order.chunks(cfg.batch_size) {
            let batch: Vec<&StereoSample> = batch_ids.iter().map(|&i| &samples[i]).collect();
            let b = stack_batch(&batch, cfg.dmax)?;

            let record = graph.forward_train(&b.left, &b.right, cfg.seed, state.t)?;
            let (loss, grad) = bce_loss(record.output(), &b.target, &b.mask)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    last_checkpoint: last_checkpoint.clone(),
                });
            }
            let batch_mask: f64 = b.mask.sum_f64();
            loss_weighted += loss * batch_mask;
            weight_total += batch_mask;

            let pred_px = denormalize_disparity(record.output(), cfg.dmax);
            for ((&p, &g), &m) in pred_px.data().iter().zip(b.gt_px.data()).zip(b.mask.data()) {
                if m != 0.0 {
                    abs_err_px += f64::from((p - g).abs());
                }
            }

            let grads = graph.backward(&record, &grad)?;
            rmsprop_step(graph, &grads, &mut state, cfg)?;
        }

        let stats = EpochStats {
            epoch,
            loss: loss_weighted / weight_total,
            epe: abs_err_px / weight_total,
            lr: state.current_lr(cfg),
            seconds: start.elapsed().as_secs_f64(),
        };
        if let Some(cb) = options.on_epoch.as_deref_mut() {
            cb(&stats);
        }
        log.epochs.push(stats);

        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs {
            write_checkpoint(graph, &mut last_checkpoint)?;
        }
        if let Some(stop) = options.stop_after_epoch.as_deref_mut() {
            if stop(log.epochs.last().expect("entry just pushed")) {
                break;
            }
        }
    }

    write_checkpoint(graph, &mut last_checkpoint)?;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;
    use crate::graph::build_densemapnet;
    use crate::test_util::rand_tensor_in;

    #[test]
    fn bce_at_half_is_ln2() {
        let p = Tensor::filled(Shape::nhwc(1, 4, 4, 1), 0.5f32);
        let mask = Tensor::filled(Shape::nhwc(1, 4, 4, 1), 1.0f32);
        let (loss, _) = bce_loss(&p, &p, &mask).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-7, "{loss}");
    }

    #[test]
    fn bce_gradient_zero_at_match() {
        let p = rand_tensor_in::<f32>(Shape::nhwc(1, 5, 5, 1), 0.05, 0.95, 21);
        let mask = Tensor::filled(p.shape(), 1.0f32);
        let (_, grad) = bce_loss(&p, &p, &mask).unwrap();
        for &g in grad.data() {
            assert!(g.abs() < 1e-7, "{g}");
        }
    }

    #[test]
    fn bce_matches_per_pixel_oracle_with_half_mask() {
        let p = rand_tensor_in::<f32>(Shape::nhwc(1, 10, 10, 1), 0.02, 0.98, 22);
        let t = rand_tensor_in::<f32>(Shape::nhwc(1, 10, 10, 1), 0.0, 1.0, 23);
        let mut mask = Tensor::filled(p.shape(), 1.0f32);
        for (i, m) in mask.data_mut().iter_mut().enumerate() {
            if i % 2 == 0 {
                *m = 0.0;
            }
        }
        let (loss, _) = bce_loss(&p, &t, &mask).unwrap();
        // scalar per-pixel oracle
        let mut total = 0.0f64;
        let mut count = 0.0f64;
        for i in 0..100 {
            if mask.data()[i] == 0.0 {
                continue;
            }
            let pv = f64::from(p.data()[i]).clamp(1e-7, 1.0 - 1e-7);
            let tv = f64::from(t.data()[i]);
            total -= tv * pv.ln() + (1.0 - tv) * (1.0 - pv).ln();
            count += 1.0;
        }
        assert!((loss - total / count).abs() < 1e-12, "{loss} vs {}", total / count);
    }

    #[test]
    fn bce_rejects_empty_mask_and_shape_mismatch() {
        let p = Tensor::filled(Shape::nhwc(1, 2, 2, 1), 0.5f32);
        let zero_mask = Tensor::<f32>::zeros(p.shape());
        assert!(matches!(
            bce_loss(&p, &p, &zero_mask),
            Err(TrainError::EmptyMask)
        ));
        let t = Tensor::filled(Shape::nhwc(1, 2, 3, 1), 0.5f32);
        let mask = Tensor::filled(t.shape(), 1.0f32);
        assert!(matches!(
            bce_loss(&p, &t, &mask),
            Err(TrainError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let shape = Shape::nhwc(1, 4, 4, 1);
        let p = rand_tensor_in::<f64>(shape, 0.05, 0.95, 31);
        let t = rand_tensor_in::<f64>(shape, 0.0, 1.0, 32);
        let mask_f64 = Tensor::filled(shape, 1.0f64);
        let p32: Tensor<f32> = p.cast();
        let t32: Tensor<f32> = t.cast();
        let m32: Tensor<f32> = mask_f64.cast();
        let (_, grad) = bce_loss(&p32, &t32, &m32).unwrap();

        // f64 finite differences of the scalar loss
        let eval = |pp: &Tensor<f64>| -> f64 {
            let mut total = 0.0;
            for (&pv, &tv) in pp.data().iter().zip(t.data()) {
                let pv = pv.clamp(1e-7, 1.0 - 1e-7);
                total -= tv * pv.ln() + (1.0 - tv) * (1.0 - pv).ln();
            }
            total / 16.0
        };
        let h = 1e-6;
        for i in 0..16 {
            let mut plus = p.clone();
            plus.data_mut()[i] += h;
            let mut minus = p.clone();
            minus.data_mut()[i] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = f64::from(grad.data()[i]);
            let rel = (a - fd).abs() / fd.abs().max(1e-3);
            assert!(rel < 1e-5, "element {i}: analytic {a} vs fd {fd}");
        }
    }

    #[test]
    fn rmsprop_first_step_magnitude() {
        // one parameter with g = 1 at t = 0: dp = -1e-3 / (sqrt(0.1) + eps)
        let mut graph = build_densemapnet::<f32>(3, 32.0).unwrap();
        let cfg = TrainConfig::default();
        let mut state = OptimizerState::new(&graph);
        let mut grads = GradStore::empty(graph.layer_count());
        let conv1 = graph.layer_id("Conv2D_1").unwrap();
        let kshape = graph.param_shape("Conv2D_1", ParamRole::Kernel).unwrap();
        grads.insert(conv1, ParamRole::Kernel, Tensor::filled(kshape, 1.0));
        rmsprop_step(&mut graph, &grads, &mut state, &cfg).unwrap();
        let mut dp = 0.0f64;
        graph.visit_params(|_, name, role, t| {
            if name == "Conv2D_1" && role == ParamRole::Kernel {
                dp = f64::from(t.data()[0]);
            }
        });
        assert!((dp + 3.16228e-3).abs() < 1e-7, "{dp}");
        assert_eq!(state.t, 1);
    }

    #[test]
    fn rmsprop_zero_gradient_leaves_parameters_and_decays_v() {
        let mut graph = build_densemapnet::<f32>(3, 32.0).unwrap();
        graph.init_parameters(5);
        let mut before = Vec::new();
        graph.visit_params(|_, _, _, t| before.push(t.data().to_vec()));

        let cfg = TrainConfig::default();
        let mut state = OptimizerState::new(&graph);
        // seed one accumulator with a known value to observe the decay
        state.v[0].data_mut()[0] = 1.0;
        let empty = empty_grads(&graph);
        rmsprop_step(&mut graph, &empty, &mut state, &cfg).unwrap();

        let mut after = Vec::new();
        graph.visit_params(|_, _, _, t| after.push(t.data().to_vec()));
        assert_eq!(before, after);
        assert_eq!(state.v[0].data()[0], 0.9);
        assert_eq!(state.t, 1);
    }

    fn empty_grads(graph: &ModelGraph<f32>) -> GradStore<f32> {
        GradStore::empty(graph.layer_count())
    }

    #[test]
    fn learning_rate_decay_schedule() {
        let cfg = TrainConfig::default();
        let mut state = OptimizerState {
            v: Vec::new(),
            t: 0,
        };
        assert_eq!(state.current_lr(&cfg), 1e-3);
        state.t = 1_000_000;
        assert!((state.current_lr(&cfg) - 5e-4).abs() < 1e-12);
        // strictly decreasing for positive decay
        let mut prev = f64::INFINITY;
        for t in 0..100 {
            state.t = t;
            let lr = state.current_lr(&cfg);
            assert!(lr < prev);
            prev = lr;
        }
    }

    #[test]
    fn zero_epochs_changes_nothing() {
        let mut graph = build_densemapnet::<f32>(3, 8.0).unwrap();
        graph.init_parameters(3);
        let mut before = Vec::new();
        graph.visit_params(|_, _, _, t| before.push(t.data().to_vec()));
        let samples = synth_generate(2, 16, 24, 4, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            dmax: 4.0,
            ..TrainConfig::default()
        };
        let log = fit(&mut graph, &samples, &cfg, FitOptions::default()).unwrap();
        assert!(log.epochs.is_empty());
        let mut after = Vec::new();
        graph.visit_params(|_, _, _, t| after.push(t.data().to_vec()));
        assert_eq!(before, after);
    }

    #[test]
    fn two_epochs_reduce_loss_and_are_deterministic() {
        let samples = synth_generate(4, 16, 24, 4, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            dmax: 4.0,
            seed: 11,
            checkpoint_every: 0,
            ..TrainConfig::default()
        };
        let run = || {
            let mut graph = build_densemapnet::<f32>(3, 4.0).unwrap();
            graph.init_parameters(cfg.seed);
            fit(&mut graph, &samples, &cfg, FitOptions::default()).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.epochs.len(), 3);
        for (x, y) in a.epochs.iter().zip(&b.epochs) {
            assert_eq!(x.loss.to_bits(), y.loss.to_bits(), "loss curves diverge");
            assert_eq!(x.epe.to_bits(), y.epe.to_bits());
        }
    }

    #[test]
    fn mask_excludes_pixels_from_loss() {
        // a masked pixel's prediction must not affect the loss
        let t = Tensor::filled(Shape::nhwc(1, 2, 2, 1), 0.3f32);
        let mut mask = Tensor::filled(t.shape(), 1.0f32);
        mask.data_mut()[0] = 0.0;
        let mut p1 = Tensor::filled(t.shape(), 0.4f32);
        let mut p2 = p1.clone();
        p1.data_mut()[0] = 0.9;
        p2.data_mut()[0] = 0.1;
        let (l1, g1) = bce_loss(&p1, &t, &mask).unwrap();
        let (l2, g2) = bce_loss(&p2, &t, &mask).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g1.data()[0], 0.0);
        assert_eq!(g2.data()[0], 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            rho: 1.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}

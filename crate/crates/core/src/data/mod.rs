//! Stereo dataset ingestion, splitting, and synthesis.

mod dataset;
mod kitti;
mod pfm;
mod synth;

pub use dataset::{load_dataset, load_image_unit, save_dataset, DatasetMeta};
pub use kitti::load_kitti_disparity;
pub use pfm::{load_pfm, write_pfm};
pub use synth::synth_generate;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::DataError;
use crate::tensor::{Shape, Tensor};

/// KITTI crop window: width x height.
pub const KITTI_CROP_W: usize = 1224;
pub const KITTI_CROP_H: usize = 200;

/// One rectified stereo pair with ground truth.
#[derive(Clone, Debug)]
pub struct StereoSample {
    /// Left image, `[1,H,W,C]`, values in [0, 1].
    pub left: Tensor<f32>,
    /// Right image, same shape as `left`.
    pub right: Tensor<f32>,
    /// Ground-truth disparity in pixels, `[1,H,W,1]`.
    pub disparity_gt: Tensor<f32>,
    /// 1 where the ground truth is valid, 0 elsewhere.
    pub valid_mask: Tensor<f32>,
    /// Dataset-level maximum disparity in pixels.
    pub dmax: f64,
}

impl StereoSample {
    /// Builds a sample, asserting the type invariants: equal spatial shapes
    /// and valid disparities within `[0, dmax]`.
    pub fn new(
        left: Tensor<f32>,
        right: Tensor<f32>,
        disparity_gt: Tensor<f32>,
        valid_mask: Tensor<f32>,
        dmax: f64,
    ) -> Result<Self, DataError> {
        let (l, r, d, m) = (left.shape(), right.shape(), disparity_gt.shape(), valid_mask.shape());
        if l != r {
            return Err(DataError::InvalidSample(format!(
                "left {l} and right {r} shapes differ"
            )));
        }
        if d != m || d.n() != l.n() || d.h() != l.h() || d.w() != l.w() || d.c() != 1 {
            return Err(DataError::InvalidSample(format!(
                "ground truth {d} / mask {m} do not match images {l}"
            )));
        }
        if !(dmax > 0.0) {
            return Err(DataError::InvalidSample(format!("dmax {dmax} must be positive")));
        }
        for (&gt, &mask) in disparity_gt.data().iter().zip(valid_mask.data()) {
            if mask != 0.0 && mask != 1.0 {
                return Err(DataError::InvalidSample(format!(
                    "mask value {mask} is not 0 or 1"
                )));
            }
            if mask == 1.0 && (!gt.is_finite() || gt < 0.0 || f64::from(gt) > dmax) {
                return Err(DataError::InvalidSample(format!(
                    "valid disparity {gt} outside [0, {dmax}]"
                )));
            }
        }
        Ok(StereoSample {
            left,
            right,
            disparity_gt,
            valid_mask,
            dmax,
        })
    }

    pub fn height(&self) -> usize {
        self.left.shape().h()
    }

    pub fn width(&self) -> usize {
        self.left.shape().w()
    }

    /// Largest valid ground-truth disparity, 0 if fully masked.
    pub fn max_valid_disparity(&self) -> f32 {
        self.disparity_gt
            .data()
            .iter()
            .zip(self.valid_mask.data())
            .filter(|(_, &m)| m == 1.0)
            .map(|(&d, _)| d)
            .fold(0.0f32, f32::max)
    }
}

/// Ordered references into a sample list, tagged with the split they form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetIndex {
    pub indices: Vec<usize>,
    pub split: Split,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Removes samples whose maximum valid disparity exceeds the image width,
/// shuffles the remainder with the seed, and splits 90/10 with
/// `|train| = round(0.9 * kept)`.
pub fn split_filter(
    samples: &[StereoSample],
    seed: u64,
) -> Result<(DatasetIndex, DatasetIndex, usize), DataError> {
    if samples.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut kept: Vec<usize> = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if f64::from(s.max_valid_disparity()) <= s.width() as f64 {
            kept.push(i);
        }
    }
    let rejected = samples.len() - kept.len();
    if kept.is_empty() {
        return Err(DataError::AllRejected(samples.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kept.shuffle(&mut rng);
    let train_n = (0.9 * kept.len() as f64).round() as usize;
    let test = kept.split_off(train_n);
    Ok((
        DatasetIndex {
            indices: kept,
            split: Split::Train,
            seed,
        },
        DatasetIndex {
            indices: test,
            split: Split::Test,
            seed,
        },
        rejected,
    ))
}

fn crop_tensor(t: &Tensor<f32>, y0: usize, x0: usize, h: usize, w: usize) -> Tensor<f32> {
    let s = t.shape();
    let c = s.c();
    let mut out = Tensor::zeros(Shape::nhwc(s.n(), h, w, c));
    for n in 0..s.n() {
        for y in 0..h {
            let src = ((n * s.h() + y0 + y) * s.w() + x0) * c;
            let dst = ((n * h + y) * w) * c;
            out.data_mut()[dst..dst + w * c].copy_from_slice(&t.data()[src..src + w * c]);
        }
    }
    out
}

/// Crops a sample to the fixed 1224x200 KITTI window: bottom-anchored
/// vertically (LIDAR returns concentrate low in the frame), centered
/// horizontally. Cropping an already-cropped sample is the identity.
pub fn crop_kitti(sample: &StereoSample) -> Result<StereoSample, DataError> {
    let (h, w) = (sample.height(), sample.width());
    if h < KITTI_CROP_H || w < KITTI_CROP_W {
        return Err(DataError::CropTooLarge {
            crop_w: KITTI_CROP_W,
            crop_h: KITTI_CROP_H,
            w,
            h,
        });
    }
    let y0 = h - KITTI_CROP_H;
    let x0 = (w - KITTI_CROP_W) / 2;
    StereoSample::new(
        crop_tensor(&sample.left, y0, x0, KITTI_CROP_H, KITTI_CROP_W),
        crop_tensor(&sample.right, y0, x0, KITTI_CROP_H, KITTI_CROP_W),
        crop_tensor(&sample.disparity_gt, y0, x0, KITTI_CROP_H, KITTI_CROP_W),
        crop_tensor(&sample.valid_mask, y0, x0, KITTI_CROP_H, KITTI_CROP_W),
        sample.dmax,
    )
}

/// Scales pixel disparities into [0, 1] training targets:
/// `t = clip(gt, 0, dmax) / dmax`. Returns the clipped-pixel count so
/// callers can log out-of-range ground truth.
pub fn normalize_disparity(
    gt: &Tensor<f32>,
    dmax: f64,
) -> Result<(Tensor<f32>, usize), DataError> {
    if !(dmax > 0.0) {
        return Err(DataError::InvalidSample(format!(
            "dmax {dmax} must be positive"
        )));
    }
    let mut clipped = 0usize;
    let mut out = gt.clone();
    for v in out.data_mut() {
        let d = f64::from(*v);
        let c = d.clamp(0.0, dmax);
        if c != d {
            clipped += 1;
        }
        *v = (c / dmax) as f32;
    }
    Ok((out, clipped))
}

/// Exact inverse of [`normalize_disparity`] on in-range values.
pub fn denormalize_disparity(pred: &Tensor<f32>, dmax: f64) -> Tensor<f32> {
    pred.map(|v| (f64::from(v) * dmax) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::rand_tensor_in;

    fn dummy_sample(h: usize, w: usize, disparity: f32, dmax: f64) -> StereoSample {
        let shape = Shape::nhwc(1, h, w, 3);
        StereoSample::new(
            rand_tensor_in::<f32>(shape, 0.0, 1.0, 1),
            rand_tensor_in::<f32>(shape, 0.0, 1.0, 2),
            Tensor::filled(Shape::nhwc(1, h, w, 1), disparity),
            Tensor::filled(Shape::nhwc(1, h, w, 1), 1.0),
            dmax,
        )
        .unwrap()
    }

    #[test]
    fn invariants_rejected_at_construction() {
        let shape = Shape::nhwc(1, 4, 4, 3);
        let img = Tensor::<f32>::zeros(shape);
        let gt = Tensor::<f32>::zeros(Shape::nhwc(1, 4, 4, 1));
        let mask = Tensor::filled(Shape::nhwc(1, 4, 4, 1), 1.0);
        // negative disparity on a valid pixel
        let bad_gt = Tensor::filled(Shape::nhwc(1, 4, 4, 1), -1.0);
        assert!(StereoSample::new(img.clone(), img.clone(), bad_gt, mask.clone(), 8.0).is_err());
        // disparity above dmax on a valid pixel
        let big_gt = Tensor::filled(Shape::nhwc(1, 4, 4, 1), 9.0);
        assert!(StereoSample::new(img.clone(), img.clone(), big_gt, mask.clone(), 8.0).is_err());
        // fine when masked invalid
        let big_gt = Tensor::filled(Shape::nhwc(1, 4, 4, 1), 9.0);
        let zero_mask = Tensor::<f32>::zeros(Shape::nhwc(1, 4, 4, 1));
        assert!(StereoSample::new(img.clone(), img, big_gt, zero_mask, 8.0).is_ok());
        let _ = gt;
    }

    #[test]
    fn ninety_ten_split() {
        let samples: Vec<StereoSample> = (0..10).map(|_| dummy_sample(8, 16, 1.0, 8.0)).collect();
        let (train, test, rejected) = split_filter(&samples, 3).unwrap();
        assert_eq!(rejected, 0);
        assert_eq!(train.indices.len(), 9);
        assert_eq!(test.indices.len(), 1);
        let mut all: Vec<usize> = train.indices.iter().chain(&test.indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn unrealistic_disparity_rejected() {
        // disparity beyond the image width, as in wide-baseline outliers
        let mut samples: Vec<StereoSample> =
            (0..4).map(|_| dummy_sample(8, 16, 1.0, 8.0)).collect();
        samples.push(dummy_sample(8, 16, 100.0, 10_500.0));
        let (train, test, rejected) = split_filter(&samples, 1).unwrap();
        assert_eq!(rejected, 1);
        assert_eq!(train.indices.len() + test.indices.len(), 4);
        assert!(!train.indices.contains(&4) && !test.indices.contains(&4));
    }

    #[test]
    fn split_is_deterministic() {
        let samples: Vec<StereoSample> = (0..20).map(|_| dummy_sample(8, 16, 1.0, 8.0)).collect();
        let a = split_filter(&samples, 9).unwrap();
        let b = split_filter(&samples, 9).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = split_filter(&samples, 10).unwrap();
        assert_ne!(a.0.indices, c.0.indices);
    }

    #[test]
    fn crop_is_bottom_anchored_and_idempotent() {
        let sample = dummy_sample(376, 1241, 2.0, 8.0);
        let cropped = crop_kitti(&sample).unwrap();
        assert_eq!(cropped.height(), 200);
        assert_eq!(cropped.width(), 1224);
        // bottom-anchored: last row of the crop equals last row of the source
        let y_src = 375;
        let x0 = (1241 - 1224) / 2;
        for x in 0..5 {
            assert_eq!(
                cropped.left.at(0, 199, x, 0),
                sample.left.at(0, y_src, x0 + x, 0)
            );
        }
        let again = crop_kitti(&cropped).unwrap();
        assert_eq!(again.left.data(), cropped.left.data());
        assert!(crop_kitti(&dummy_sample(100, 1300, 1.0, 8.0)).is_err());
    }

    #[test]
    fn normalize_denormalize_round_trip() {
        let gt = Tensor::from_vec(Shape::nhwc(1, 1, 1, 1), vec![96.0f32]).unwrap();
        let (t, clipped) = normalize_disparity(&gt, 192.0).unwrap();
        assert_eq!(t.data(), &[0.5]);
        assert_eq!(clipped, 0);

        // power-of-two dmax: exact inverse
        let gt = rand_tensor_in::<f32>(Shape::nhwc(1, 8, 8, 1), 0.0, 32.0, 5);
        let (t, _) = normalize_disparity(&gt, 32.0).unwrap();
        let back = denormalize_disparity(&t, 32.0);
        assert_eq!(back.data(), gt.data());
    }

    #[test]
    fn values_above_dmax_clip_to_one() {
        let gt = Tensor::from_vec(Shape::nhwc(1, 1, 1, 2), vec![300.0f32, 10.0]).unwrap();
        let (t, clipped) = normalize_disparity(&gt, 192.0).unwrap();
        assert_eq!(t.data()[0], 1.0);
        assert_eq!(clipped, 1);
        assert!(normalize_disparity(&gt, 0.0).is_err());
    }
}

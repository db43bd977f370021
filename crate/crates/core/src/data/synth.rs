//! Synthetic rectified stereo pairs with exact integer ground truth.
//!
//! Each sample is a textured background at disparity zero plus 2-5
//! textured rectangles at random integer disparities up to `dmax`. The
//! right image is generated by scattering every left pixel `d` columns to
//! the left through a z-buffer (larger disparity wins, as the nearer
//! surface), so `right[x - d] = left[x]` holds exactly wherever the ground
//! truth is valid. Left pixels that lose the z-test or fall off the right
//! image are masked invalid. The zero-disparity background mirrors real
//! scenes, where distant surroundings dominate the frame; it also keeps
//! most normalized targets saturated, so the cross-entropy floor of a
//! perfectly fitted model stays small.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::StereoSample;
use crate::error::DataError;
use crate::tensor::{Shape, Tensor};

const CHANNELS: usize = 3;
const NOISE: f64 = 0.15;

/// Generates `count` samples at `h x w` with disparities in `[0, dmax]`.
pub fn synth_generate(
    count: usize,
    h: usize,
    w: usize,
    dmax: usize,
    seed: u64,
) -> Result<Vec<StereoSample>, DataError> {
    if h < 1 || w < 1 {
        return Err(DataError::SynthInvalid(format!("empty image {h}x{w}")));
    }
    if dmax == 0 {
        return Err(DataError::SynthInvalid("dmax must be at least 1".into()));
    }
    if dmax >= w {
        return Err(DataError::SynthInvalid(format!(
            "dmax {dmax} must be smaller than the image width {w}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| generate_one(h, w, dmax, &mut rng)).collect()
}

fn generate_one(
    h: usize,
    w: usize,
    dmax: usize,
    rng: &mut ChaCha8Rng,
) -> Result<StereoSample, DataError> {
    let mut disparity = vec![0u32; h * w];
    let mut base = vec![[0.0f64; CHANNELS]; h * w];

    // background: far scenery at disparity zero
    let bg_color = region_color(rng);
    for b in base.iter_mut() {
        *b = bg_color;
    }

    // foreground rectangles at random disparities
    let n_rects = rng.gen_range(2..=5);
    for _ in 0..n_rects {
        let rh = rng.gen_range((h / 8).max(2)..=(h / 4).max(3));
        let rw = rng.gen_range((w / 8).max(2)..=(w / 4).max(3));
        let y0 = rng.gen_range(0..=h - rh);
        let x0 = rng.gen_range(0..=w - rw);
        let d = rng.gen_range(0..=dmax as u32);
        let color = region_color(rng);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                disparity[y * w + x] = d;
                base[y * w + x] = color;
            }
        }
    }

    // left image: region colors plus per-pixel noise
    let mut left = vec![0.0f32; h * w * CHANNELS];
    for p in 0..h * w {
        for c in 0..CHANNELS {
            let v = base[p][c] + rng.gen_range(-NOISE..NOISE);
            left[p * CHANNELS + c] = v.clamp(0.0, 1.0) as f32;
        }
    }

    // right image: z-buffer scatter, nearer (larger d) surface wins
    let mut right = vec![0.0f32; h * w * CHANNELS];
    let mut zbuf = vec![-1i64; h * w];
    for y in 0..h {
        for x in 0..w {
            let d = disparity[y * w + x] as i64;
            let xr = x as i64 - d;
            if xr >= 0 && zbuf[y * w + xr as usize] < d {
                zbuf[y * w + xr as usize] = d;
                let src = (y * w + x) * CHANNELS;
                let dst = (y * w + xr as usize) * CHANNELS;
                right[dst..dst + CHANNELS].copy_from_slice(&left[src..src + CHANNELS]);
            }
        }
    }
    // surfaces visible only to the right camera: arbitrary texture
    for p in 0..h * w {
        if zbuf[p] < 0 {
            for c in 0..CHANNELS {
                right[p * CHANNELS + c] = rng.gen_range(0.0..1.0f64) as f32;
            }
        }
    }

    // a left pixel is valid when its correspondence is in frame and won
    let mut mask = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let d = disparity[y * w + x] as i64;
            let xr = x as i64 - d;
            if xr >= 0 && zbuf[y * w + xr as usize] == d {
                mask[y * w + x] = 1.0;
            }
        }
    }

    let gt: Vec<f32> = disparity.iter().map(|&d| d as f32).collect();
    StereoSample::new(
        Tensor::from_vec(Shape::nhwc(1, h, w, CHANNELS), left).expect("length matches"),
        Tensor::from_vec(Shape::nhwc(1, h, w, CHANNELS), right).expect("length matches"),
        Tensor::from_vec(Shape::nhwc(1, h, w, 1), gt).expect("length matches"),
        Tensor::from_vec(Shape::nhwc(1, h, w, 1), mask).expect("length matches"),
        dmax as f64,
    )
}

fn region_color(rng: &mut ChaCha8Rng) -> [f64; CHANNELS] {
    [
        rng.gen_range(0.15..0.85),
        rng.gen_range(0.15..0.85),
        rng.gen_range(0.15..0.85),
    ]
}

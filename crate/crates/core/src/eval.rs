//! Evaluation: end-point error, depth conversion, disparity rendering, and
//! a deterministic throughput benchmark.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use crate::data::{denormalize_disparity, StereoSample};
use crate::error::EvalError;
use crate::graph::ModelGraph;
use crate::tensor::{Shape, Tensor};

/// Mean absolute disparity error in pixels over valid pixels, accumulated
/// in f64 so the result is independent of tensor precision.
pub fn epe(
    pred_px: &Tensor<f32>,
    gt_px: &Tensor<f32>,
    mask: &Tensor<f32>,
) -> Result<f64, EvalError> {
    if pred_px.shape() != gt_px.shape() || pred_px.shape() != mask.shape() {
        return Err(EvalError::ShapeMismatch {
            pred: pred_px.shape(),
            gt: gt_px.shape(),
        });
    }
    let mut total = 0.0f64;
    let mut count = 0.0f64;
    for ((&p, &g), &m) in pred_px.data().iter().zip(gt_px.data()).zip(mask.data()) {
        if m != 0.0 {
            total += f64::from(m) * (f64::from(p) - f64::from(g)).abs();
            count += f64::from(m);
        }
    }
    if count == 0.0 {
        return Err(EvalError::EmptyMask);
    }
    Ok(total / count)
}

/// Depth from disparity: `z = f * B / d` with focal length `f` in pixels
/// and baseline `B` in meters. Positive disparity required; zero encodes
/// occlusion or missing measurement.
pub fn depth_from_disparity(d: f64, focal_px: f64, baseline_m: f64) -> Result<f64, EvalError> {
    if d <= 0.0 {
        return Err(EvalError::NonPositiveDisparity(d));
    }
    Ok(focal_px * baseline_m / d)
}

/// Output encoding for [`emit_disparity_png`].
#[derive(Clone, Copy, Debug)]
pub enum DisparityPngMode {
    /// 16-bit gray, `round(d * 256)` per pixel. The exact inverse of the
    /// raw/256 decoding, so re-reading loses at most 1/512 px.
    Gray16,
    /// 8-bit color, piecewise-linear blue -> green -> red over `[0, dmax]`:
    /// with `t = clamp(d/dmax, 0, 1)`, the left half fades blue into green
    /// (`r=0, g=2t, b=1-2t`) and the right half green into red
    /// (`r=2t-1, g=2-2t, b=0`), each channel scaled to 0..255.
    Colormap { dmax: f64 },
}

/// Writes a `[1,H,W,1]` pixel-disparity map as PNG.
pub fn emit_disparity_png(
    pred_px: &Tensor<f32>,
    path: &Path,
    mode: DisparityPngMode,
) -> Result<(), EvalError> {
    let s = pred_px.shape();
    let write_err = |source| EvalError::ImageWrite {
        path: path.display().to_string(),
        source,
    };
    match mode {
        DisparityPngMode::Gray16 => {
            let mut img: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
                image::ImageBuffer::new(s.w() as u32, s.h() as u32);
            for y in 0..s.h() {
                for x in 0..s.w() {
                    let d = f64::from(pred_px.at(0, y, x, 0));
                    let raw = (d * 256.0).round().clamp(0.0, 65535.0) as u16;
                    img.put_pixel(x as u32, y as u32, image::Luma([raw]));
                }
            }
            img.save(path).map_err(write_err)
        }
        DisparityPngMode::Colormap { dmax } => {
            let mut img = image::RgbImage::new(s.w() as u32, s.h() as u32);
            for y in 0..s.h() {
                for x in 0..s.w() {
                    let d = f64::from(pred_px.at(0, y, x, 0));
                    let t = (d / dmax).clamp(0.0, 1.0);
                    let (r, g, b) = if t < 0.5 {
                        (0.0, 2.0 * t, 1.0 - 2.0 * t)
                    } else {
                        (2.0 * t - 1.0, 2.0 - 2.0 * t, 0.0)
                    };
                    let px = [
                        (r * 255.0).round() as u8,
                        (g * 255.0).round() as u8,
                        (b * 255.0).round() as u8,
                    ];
                    img.put_pixel(x as u32, y as u32, image::Rgb(px));
                }
            }
            img.save(path).map_err(write_err)
        }
    }
}

/// Evaluation summary, serializable as flat key=value text.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub epe: f64,
    pub valid_pixel_count: u64,
    pub samples_evaluated: usize,
    /// Images per second over the evaluated forward passes.
    pub throughput: f64,
    pub wall_seconds: f64,
}

impl EvalReport {
    /// key=value lines; timing fields are omitted when `with_timing` is
    /// false so reports can be compared across runs.
    pub fn format(&self, with_timing: bool) -> String {
        let mut s = format!(
            "epe={:.6}\nvalid_pixel_count={}\nsamples_evaluated={}\n",
            self.epe, self.valid_pixel_count, self.samples_evaluated
        );
        if with_timing {
            s.push_str(&format!(
                "throughput={:.4}\nwall_seconds={:.4}\n",
                self.throughput, self.wall_seconds
            ));
        }
        s
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format(true))
    }
}

/// Runs inference over every sample and reports EPE against ground truth.
/// Predictions are denormalized with the model's `dmax`.
pub fn evaluate_samples(
    graph: &ModelGraph<f32>,
    samples: &[StereoSample],
) -> Result<EvalReport, EvalError> {
    let start = Instant::now();
    let mut total_abs = 0.0f64;
    let mut total_mask = 0.0f64;
    for s in samples {
        let pred = graph.predict(&s.left, &s.right)?;
        let pred_px = denormalize_disparity(&pred, graph.dmax());
        for ((&p, &g), &m) in pred_px
            .data()
            .iter()
            .zip(s.disparity_gt.data())
            .zip(s.valid_mask.data())
        {
            if m != 0.0 {
                total_abs += (f64::from(p) - f64::from(g)).abs();
                total_mask += 1.0;
            }
        }
    }
    if total_mask == 0.0 {
        return Err(EvalError::EmptyMask);
    }
    let wall = start.elapsed().as_secs_f64();
    Ok(EvalReport {
        epe: total_abs / total_mask,
        valid_pixel_count: total_mask as u64,
        samples_evaluated: samples.len(),
        throughput: samples.len() as f64 / wall,
        wall_seconds: wall,
    })
}

/// Throughput benchmark result.
#[derive(Clone, Debug)]
pub struct BenchReport {
    /// Median over the timed iterations.
    pub images_per_second: f64,
    pub iterations: usize,
    pub wall_seconds: f64,
    /// CRC-32 of the output bits, identical across iterations by contract.
    pub checksum: u32,
    pub height: usize,
    pub width: usize,
}

impl BenchReport {
    pub fn format(&self, with_timing: bool) -> String {
        let mut s = format!(
            "height={}\nwidth={}\niterations={}\nchecksum={:#010x}\ndeterministic=true\n",
            self.height, self.width, self.iterations, self.checksum
        );
        if with_timing {
            s.push_str(&format!(
                "images_per_second={:.4}\nwall_seconds={:.4}\n",
                self.images_per_second, self.wall_seconds
            ));
        }
        s
    }
}

fn output_checksum(t: &Tensor<f32>) -> u32 {
    let mut bytes = Vec::with_capacity(t.len() * 4);
    for v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    crc32fast::hash(&bytes)
}

/// Measures inference throughput on a fixed random stereo pair: at least
/// two warmup passes are discarded, then `iterations` timed passes. Every
/// output must be bit-identical; the median per-image time defines the
/// reported rate.
pub fn benchmark_throughput(
    graph: &ModelGraph<f32>,
    height: usize,
    width: usize,
    iterations: usize,
) -> Result<BenchReport, EvalError> {
    assert!(iterations >= 10, "at least 10 timed iterations required");
    let c = graph.input_channels();
    let shape = Shape::nhwc(1, height, width, c);
    let fill = |stream: u64| {
        let mut t = Tensor::<f32>::zeros(shape);
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            *v = crate::rng::uniform(0xBE7C, stream, i as u64) as f32;
        }
        t
    };
    let left = fill(0);
    let right = fill(1);

    let start = Instant::now();
    let mut reference: Option<u32> = None;
    for _ in 0..2 {
        let out = graph.predict(&left, &right)?;
        reference = Some(output_checksum(&out));
    }
    let reference = reference.expect("warmup ran");

    let mut times = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let t0 = Instant::now();
        let out = graph.predict(&left, &right)?;
        times.push(t0.elapsed().as_secs_f64());
        let sum = output_checksum(&out);
        if sum != reference {
            return Err(EvalError::NonDeterministic {
                a: u64::from(reference),
                b: u64::from(sum),
            });
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let median = times[times.len() / 2];
    Ok(BenchReport {
        images_per_second: 1.0 / median,
        iterations,
        wall_seconds: start.elapsed().as_secs_f64(),
        checksum: reference,
        height,
        width,
    })
}

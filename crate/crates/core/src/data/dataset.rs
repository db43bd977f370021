//! On-disk dataset convention:
//!
//! ```text
//! <dir>/left/NNNN.png    8-bit stereo images
//! <dir>/right/NNNN.png
//! <dir>/disp/NNNN.pfm    ground-truth disparity, pixels
//! <dir>/mask/NNNN.png    8-bit validity mask (optional; absent = dense)
//! <dir>/meta.cfg         flat key=value: count, H, W, dmax, seed
//! ```

use std::fs;
use std::path::Path;

use super::{load_pfm, write_pfm, StereoSample};
use crate::error::DataError;
use crate::tensor::{Shape, Tensor};

/// Metadata record for a stored dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetMeta {
    pub count: usize,
    pub h: usize,
    pub w: usize,
    pub dmax: f64,
    pub seed: u64,
}

impl DatasetMeta {
    fn to_cfg(self) -> String {
        format!(
            "count={}\nH={}\nW={}\ndmax={}\nseed={}\n",
            self.count, self.h, self.w, self.dmax, self.seed
        )
    }

    fn parse(path: &Path, text: &str) -> Result<Self, DataError> {
        let bad = |reason: String| DataError::BadMeta {
            path: path.display().to_string(),
            reason,
        };
        let mut count = None;
        let mut h = None;
        let mut w = None;
        let mut dmax = None;
        let mut seed = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key=value", lineno + 1)))?;
            match key.trim() {
                "count" => count = Some(value.trim().parse().map_err(|_| bad(format!("count `{value}`")))?),
                "H" => h = Some(value.trim().parse().map_err(|_| bad(format!("H `{value}`")))?),
                "W" => w = Some(value.trim().parse().map_err(|_| bad(format!("W `{value}`")))?),
                "dmax" => dmax = Some(value.trim().parse().map_err(|_| bad(format!("dmax `{value}`")))?),
                "seed" => seed = Some(value.trim().parse().map_err(|_| bad(format!("seed `{value}`")))?),
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        Ok(DatasetMeta {
            count: count.ok_or_else(|| bad("missing key `count`".into()))?,
            h: h.ok_or_else(|| bad("missing key `H`".into()))?,
            w: w.ok_or_else(|| bad("missing key `W`".into()))?,
            dmax: dmax.ok_or_else(|| bad("missing key `dmax`".into()))?,
            seed: seed.ok_or_else(|| bad("missing key `seed`".into()))?,
        })
    }
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn tensor_to_rgb8(t: &Tensor<f32>) -> image::RgbImage {
    let s = t.shape();
    let mut img = image::RgbImage::new(s.w() as u32, s.h() as u32);
    for y in 0..s.h() {
        for x in 0..s.w() {
            let px = [
                (f64::from(t.at(0, y, x, 0)) * 255.0).round().clamp(0.0, 255.0) as u8,
                (f64::from(t.at(0, y, x, 1)) * 255.0).round().clamp(0.0, 255.0) as u8,
                (f64::from(t.at(0, y, x, 2)) * 255.0).round().clamp(0.0, 255.0) as u8,
            ];
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    img
}

/// Loads an 8-bit image (PNG or PPM) as `[1,H,W,channels]` scaled to
/// [0, 1]. Grayscale sources are replicated across RGB channels when a
/// 3-channel tensor is requested; RGB sources collapse to luma for 1.
pub fn load_image_unit(path: &Path, channels: usize) -> Result<Tensor<f32>, DataError> {
    let img = image::open(path).map_err(|source| DataError::ImageDecode {
        path: path.display().to_string(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match channels {
        3 => img
            .to_rgb8()
            .pixels()
            .flat_map(|p| p.0)
            .map(|v| v as f32 / 255.0)
            .collect(),
        1 => img
            .to_luma8()
            .pixels()
            .map(|p| p.0[0] as f32 / 255.0)
            .collect(),
        other => {
            return Err(DataError::InvalidSample(format!(
                "unsupported channel count {other}"
            )))
        }
    };
    Ok(Tensor::from_vec(Shape::nhwc(1, h, w, channels), data).expect("length matches"))
}

/// Writes samples in the directory convention. Deterministic: the same
/// samples produce byte-identical files.
pub fn save_dataset(
    samples: &[StereoSample],
    meta: &DatasetMeta,
    dir: &Path,
) -> Result<(), DataError> {
    for sub in ["left", "right", "disp", "mask"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| io_err(dir, e))?;
    }
    for (i, s) in samples.iter().enumerate() {
        let name = format!("{i:04}");
        tensor_to_rgb8(&s.left)
            .save(dir.join("left").join(format!("{name}.png")))
            .map_err(|source| DataError::ImageDecode {
                path: format!("left/{name}.png"),
                source,
            })?;
        tensor_to_rgb8(&s.right)
            .save(dir.join("right").join(format!("{name}.png")))
            .map_err(|source| DataError::ImageDecode {
                path: format!("right/{name}.png"),
                source,
            })?;
        write_pfm(&dir.join("disp").join(format!("{name}.pfm")), &s.disparity_gt)?;
        let ms = s.valid_mask.shape();
        let mut mask_img = image::GrayImage::new(ms.w() as u32, ms.h() as u32);
        for y in 0..ms.h() {
            for x in 0..ms.w() {
                let v = if s.valid_mask.at(0, y, x, 0) == 1.0 { 255 } else { 0 };
                mask_img.put_pixel(x as u32, y as u32, image::Luma([v]));
            }
        }
        mask_img
            .save(dir.join("mask").join(format!("{name}.png")))
            .map_err(|source| DataError::ImageDecode {
                path: format!("mask/{name}.png"),
                source,
            })?;
    }
    fs::write(dir.join("meta.cfg"), meta.to_cfg()).map_err(|e| io_err(dir, e))?;
    Ok(())
}

/// Loads a dataset directory written by [`save_dataset`] (or following the
/// same convention). A missing `mask/` directory means dense ground truth.
pub fn load_dataset(dir: &Path, channels: usize) -> Result<(Vec<StereoSample>, DatasetMeta), DataError> {
    let meta_path = dir.join("meta.cfg");
    let text = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta = DatasetMeta::parse(&meta_path, &text)?;

    let mut samples = Vec::with_capacity(meta.count);
    for i in 0..meta.count {
        let name = format!("{i:04}");
        let left = load_image_unit(&dir.join("left").join(format!("{name}.png")), channels)?;
        let right = load_image_unit(&dir.join("right").join(format!("{name}.png")), channels)?;
        let gt = load_pfm(&dir.join("disp").join(format!("{name}.pfm")))?;
        let mask_path = dir.join("mask").join(format!("{name}.png"));
        let mask = if mask_path.exists() {
            let m = load_image_unit(&mask_path, 1)?;
            m.map(|v| if v > 0.5 { 1.0 } else { 0.0 })
        } else {
            Tensor::filled(gt.shape(), 1.0)
        };
        samples.push(StereoSample::new(left, right, gt, mask, meta.dmax)?);
    }
    Ok((samples, meta))
}

//! KITTI disparity ground truth: 16-bit grayscale PNG, value/256 pixels,
//! zero marking unmeasured pixels.

use std::path::Path;

use crate::error::DataError;
use crate::tensor::{Shape, Tensor};

/// Decodes a 16-bit disparity image into (disparity pixels, valid mask).
pub fn load_kitti_disparity(path: &Path) -> Result<(Tensor<f32>, Tensor<f32>), DataError> {
    let img = image::open(path).map_err(|source| DataError::ImageDecode {
        path: path.display().to_string(),
        source,
    })?;
    let gray = match img {
        image::DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(DataError::KittiNot16Bit {
                path: path.display().to_string(),
                got: format!("{:?}", other.color()),
            })
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let mut disparity = vec![0.0f32; w * h];
    let mut mask = vec![0.0f32; w * h];
    for (i, px) in gray.pixels().enumerate() {
        let raw = px.0[0];
        if raw > 0 {
            disparity[i] = raw as f32 / 256.0;
            mask[i] = 1.0;
        }
    }
    Ok((
        Tensor::from_vec(Shape::nhwc(1, h, w, 1), disparity).expect("length matches"),
        Tensor::from_vec(Shape::nhwc(1, h, w, 1), mask).expect("length matches"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_png16(path: &Path, w: u32, h: u32, values: &[u16]) {
        let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_vec(w, h, values.to_vec()).unwrap();
        buf.save(path).unwrap();
    }

    #[test]
    fn decodes_quarter_pixel_encoding() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("disp.png");
        write_png16(&path, 3, 1, &[256, 0, 43887]);
        let (disp, mask) = load_kitti_disparity(&path).unwrap();
        assert_eq!(disp.data()[0], 1.0);
        assert_eq!(mask.data()[0], 1.0);
        // zero is the invalid sentinel
        assert_eq!(disp.data()[1], 0.0);
        assert_eq!(mask.data()[1], 0.0);
        // the largest encoded disparity decodes exactly (43887 / 256)
        assert_eq!(disp.data()[2], 43887.0 / 256.0);
        assert_eq!(mask.data()[2], 1.0);
    }

    #[test]
    fn rejects_8_bit_input() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("disp8.png");
        let buf: image::GrayImage = image::ImageBuffer::from_vec(2, 2, vec![1, 2, 3, 4]).unwrap();
        buf.save(&path).unwrap();
        assert!(matches!(
            load_kitti_disparity(&path),
            Err(DataError::KittiNot16Bit { .. })
        ));
    }
}

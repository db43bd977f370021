//! PFM ("Pf") reader/writer for dense disparity maps.
//!
//! Header: `Pf`, width and height, then a scale whose sign encodes byte
//! order (negative = little-endian). The payload stores rows bottom-to-top;
//! we return them top-to-bottom and take absolute values, since disparity
//! maps use the sign only as a convention.

use std::fs;
use std::path::Path;

use crate::error::DataError;
use crate::tensor::{Shape, Tensor};

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads one ASCII token (non-whitespace run), returning it and the index
/// just past the single whitespace byte that terminates it.
fn token(buf: &[u8], mut pos: usize) -> Result<(&str, usize), DataError> {
    while pos < buf.len() && buf[pos].is_ascii_whitespace() {
        pos += 1;
    }
    let start = pos;
    while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
        pos += 1;
    }
    if start == pos || pos >= buf.len() {
        return Err(DataError::PfmBadDims("unterminated header".into()));
    }
    let s = std::str::from_utf8(&buf[start..pos])
        .map_err(|_| DataError::PfmBadDims("non-ASCII header".into()))?;
    Ok((s, pos + 1)) // consume exactly one whitespace byte
}

/// Loads a single-channel PFM as a `[1,H,W,1]` tensor in top-to-bottom
/// row order, with absolute values applied.
pub fn load_pfm(path: &Path) -> Result<Tensor<f32>, DataError> {
    let buf = fs::read(path).map_err(|e| io_err(path, e))?;
    if buf.len() < 2 || &buf[..2] != b"Pf" {
        return Err(DataError::PfmBadMagic);
    }
    if buf.len() < 3 || !buf[2].is_ascii_whitespace() {
        return Err(DataError::PfmBadMagic);
    }
    let (w_tok, pos) = token(&buf, 3)?;
    let (h_tok, pos) = token(&buf, pos)?;
    let (scale_tok, pos) = token(&buf, pos)?;

    let w: usize = w_tok
        .parse()
        .map_err(|_| DataError::PfmBadDims(format!("width `{w_tok}`")))?;
    let h: usize = h_tok
        .parse()
        .map_err(|_| DataError::PfmBadDims(format!("height `{h_tok}`")))?;
    if w == 0 || h == 0 || w.saturating_mul(h) > (1 << 30) {
        return Err(DataError::PfmBadDims(format!("{w}x{h}")));
    }
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| DataError::PfmBadScale(scale_tok.to_string()))?;
    if !scale.is_finite() || scale == 0.0 {
        return Err(DataError::PfmBadScale(scale_tok.to_string()));
    }
    let little_endian = scale < 0.0;

    let expected = w * h * 4;
    let payload = &buf[pos..];
    if payload.len() < expected {
        return Err(DataError::PfmTruncated {
            expected,
            got: payload.len(),
        });
    }

    let mut data = vec![0.0f32; w * h];
    for y in 0..h {
        // stored bottom-to-top
        let src_row = h - 1 - y;
        for x in 0..w {
            let o = (src_row * w + x) * 4;
            let b: [u8; 4] = payload[o..o + 4].try_into().unwrap();
            let v = if little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
            data[y * w + x] = v.abs();
        }
    }
    Ok(Tensor::from_vec(Shape::nhwc(1, h, w, 1), data).expect("length matches"))
}

/// Writes a `[1,H,W,1]` tensor as little-endian PFM (scale -1.0), rows
/// bottom-to-top per the format.
pub fn write_pfm(path: &Path, map: &Tensor<f32>) -> Result<(), DataError> {
    let s = map.shape();
    assert_eq!(s.n(), 1, "write_pfm expects a single map");
    assert_eq!(s.c(), 1, "write_pfm expects one channel");
    let (h, w) = (s.h(), s.w());
    let mut buf = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    buf.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            buf.extend_from_slice(&map.at(0, y, x, 0).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

//! Checkpoint files: bit-exact parameter serialization with CRC validation.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "DMNW"
//! version u16      currently 1
//! count   u32      number of parameter records
//! record  repeated count times:
//!     name_len u16, name UTF-8, role u8,
//!     dims 4 x u32, payload dims-product x f32
//! crc32   u32      CRC-32 (IEEE) over everything after the magic
//! ```
//!
//! Loading stages all records first and applies them only after the CRC,
//! every shape, and full coverage have been validated, so a bad file never
//! leaves a graph half-updated.

use std::fs;
use std::path::Path;

use crate::error::CheckpointError;
use crate::graph::{ModelGraph, ParamRole};
use crate::tensor::{Shape, Tensor};

const MAGIC: &[u8; 4] = b"DMNW";
const VERSION: u16 = 1;

/// Serializes every parameter of the graph, in graph order.
pub fn save_checkpoint(graph: &ModelGraph<f32>, path: &Path) -> Result<(), CheckpointError> {
    let mut records = 0u32;
    graph.visit_params(|_, _, _, _| records += 1);

    let mut body: Vec<u8> = Vec::new();
    body.extend_from_slice(&VERSION.to_le_bytes());
    body.extend_from_slice(&records.to_le_bytes());
    graph.visit_params(|_, name, role, tensor| {
        let name_bytes = name.as_bytes();
        body.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        body.extend_from_slice(name_bytes);
        body.push(role as u8);
        for d in tensor.shape().0 {
            body.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in tensor.data() {
            body.extend_from_slice(&v.to_le_bytes());
        }
    });

    let crc = crc32fast::hash(&body);
    let mut file = Vec::with_capacity(4 + body.len() + 4);
    file.extend_from_slice(MAGIC);
    file.extend_from_slice(&body);
    file.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, file)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, context: &str) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Truncated {
                context: context.to_string(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, context: &str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, context)?.try_into().unwrap()))
    }

    fn u32(&mut self, context: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, context)?.try_into().unwrap()))
    }
}

/// Loads a checkpoint into a built graph. Every record must match an
/// existing parameter's shape, and every graph parameter must be covered.
pub fn load_checkpoint(graph: &mut ModelGraph<f32>, path: &Path) -> Result<(), CheckpointError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(CheckpointError::Truncated {
            context: "header".into(),
        });
    }
    let body = &bytes[4..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored_crc != computed {
        return Err(CheckpointError::CrcMismatch {
            stored: stored_crc,
            computed,
        });
    }

    let mut cur = Cursor { buf: body, pos: 0 };
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(CheckpointError::UnknownVersion(version));
    }
    let count = cur.u32("record count")?;

    let mut staged: Vec<(String, ParamRole, Tensor<f32>)> = Vec::with_capacity(count as usize);
    for i in 0..count {
        let context = format!("record {i}");
        let name_len = cur.u16(&context)? as usize;
        let name = std::str::from_utf8(cur.take(name_len, &context)?)
            .map_err(|_| CheckpointError::InvalidRecord(format!("{context}: non-UTF-8 name")))?
            .to_string();
        let role_byte = cur.take(1, &context)?[0];
        let role = ParamRole::from_byte(role_byte).ok_or_else(|| {
            CheckpointError::InvalidRecord(format!("{context}: unknown role byte {role_byte}"))
        })?;
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = cur.u32(&context)? as usize;
        }
        let shape = Shape(dims);
        let expected = graph
            .param_shape(&name, role)
            .ok_or_else(|| CheckpointError::UnknownParam {
                layer: name.clone(),
                role,
            })?;
        if shape != expected {
            return Err(CheckpointError::ShapeMismatch {
                layer: name,
                role,
                expected,
                got: shape,
            });
        }
        let payload = cur.take(shape.len() * 4, &context)?;
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        staged.push((
            name,
            role,
            Tensor::from_vec(shape, data).expect("payload length checked"),
        ));
    }
    if cur.pos != body.len() {
        return Err(CheckpointError::InvalidRecord(format!(
            "{} trailing bytes after last record",
            body.len() - cur.pos
        )));
    }

    // every graph parameter must be present exactly once
    let mut missing: Option<(String, ParamRole)> = None;
    graph.visit_params(|_, name, role, _| {
        if missing.is_none() && !staged.iter().any(|(n, r, _)| n == name && *r == role) {
            missing = Some((name.to_string(), role));
        }
    });
    if let Some((layer, role)) = missing {
        return Err(CheckpointError::MissingParam { layer, role });
    }

    for (name, role, tensor) in staged {
        graph
            .set_param(&name, role, tensor)
            .expect("validated above");
    }
    Ok(())
}

//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  "HGCK"
//! u32    format version
//! u32    parameter count
//! per parameter:  u32 name length, name bytes (UTF-8), u8 dtype (0 = f64),
//!                 u32 rank, u64 dims...
//! payload: every parameter's values as f64, in manifest order
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{ParamStore, Tensor, TensorError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HGCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const DTYPE_F64: u8 = 0;

pub fn encode_params(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.numel() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F64);
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
    }
    for (_, _, t) in store.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorError> {
        if self.pos + n > self.buf.len() {
            return Err(TensorError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TensorError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TensorError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a checkpoint into `(name, tensor)` pairs in file order.
pub fn decode_params(bytes: &[u8]) -> Result<Vec<(String, Tensor)>, TensorError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(TensorError::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(TensorError::Checkpoint(format!(
            "unsupported format version {} (expected {})",
            version, CHECKPOINT_VERSION
        )));
    }
    let count = r.u32()? as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = core::str::from_utf8(r.take(len)?)
            .map_err(|_| TensorError::Checkpoint("parameter name is not UTF-8".into()))?;
        let dtype = r.take(1)?[0];
        if dtype != DTYPE_F64 {
            return Err(TensorError::Checkpoint(format!("`{}`: unknown dtype {}", name, dtype)));
        }
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        manifest.push((String::from(name), shape));
    }
    let mut out = Vec::with_capacity(count);
    for (name, shape) in manifest {
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(TensorError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(out)
}

/// Overwrites every parameter of `store` from a checkpoint. Names and shapes
/// must match the store exactly.
pub fn load_into(store: &mut ParamStore, bytes: &[u8]) -> Result<(), TensorError> {
    let entries = decode_params(bytes)?;
    let mut missing = Vec::new();
    for (_, name, t) in store.iter() {
        match entries.iter().find(|(n, _)| n == name) {
            None => missing.push(String::from(name)),
            Some((_, v)) if v.shape() != t.shape() => {
                return Err(TensorError::Checkpoint(format!(
                    "shape mismatch for `{}`: file {:?}, model {:?}",
                    name,
                    v.shape(),
                    t.shape()
                )))
            }
            Some(_) => {}
        }
    }
    if !missing.is_empty() {
        return Err(TensorError::Checkpoint(format!("missing parameters: {}", missing.join(", "))));
    }
    if let Some((extra, _)) = entries.iter().find(|(n, _)| store.id(n).is_none()) {
        return Err(TensorError::Checkpoint(format!("unexpected parameter `{}` in checkpoint", extra)));
    }
    for (name, t) in entries {
        let id = store.id(&name).expect("checked above");
        *store.get_mut(id) = t;
    }
    Ok(())
}

//! `GQN1` parameter payload: the magic, then per tensor a little-endian u32
//! name length, the UTF-8 name, u32 rank, u32 dims and raw f64 values.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{ParamSet, Tensor};
use crate::{Error, Result};

pub const PARAMS_MAGIC: &[u8; 4] = b"GQN1";

const BUFFER_SUFFIXES: [&str; 2] = [".running_mean", ".running_var"];

pub fn encode_params(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PARAMS_MAGIC);
    for e in params.entries() {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.value.rank() as u32).to_le_bytes());
        for &d in e.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in e.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Codec(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Inverse of [`encode_params`]. Entries named `*.running_mean` or
/// `*.running_var` come back as non-trainable buffers.
pub fn decode_params(bytes: &[u8]) -> Result<ParamSet> {
    if bytes.len() < 4 || &bytes[..4] != PARAMS_MAGIC {
        return Err(Error::Codec("missing GQN1 magic".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let mut params = ParamSet::new();
    while r.pos < bytes.len() {
        let name_len = r.u32("name length")? as usize;
        let name = String::from_utf8(r.take(name_len, "name")?.to_vec())
            .map_err(|_| Error::Codec("tensor name is not UTF-8".into()))?;
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Codec(format!("tensor `{name}` is too large")))?;
        let raw = r.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Codec(format!("tensor `{name}` is too large")))?,
            "values",
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let value = Tensor::new(shape, data).map_err(|e| Error::Codec(format!("{name}: {e}")))?;
        let trainable = !BUFFER_SUFFIXES.iter().any(|s| name.ends_with(s));
        params.push(name, value, trainable)?;
    }
    Ok(params)
}

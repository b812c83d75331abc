//! Checkpoint files: a metadata header followed by a GQN1 parameter payload.
//!
//! ```text
//! b"GQCK"  u32 version
//! u64 config hash   u64 episodes trained
//! u32 config length, config text (UTF-8)
//! u64 payload length, GQN1 payload
//! ```
//!
//! All integers are little-endian. Tabular models are stored as a parameter
//! set with `qtable.states` (state codes) and `qtable.values` (`[n, 9]`).

use std::fs;
use std::path::Path;

use graspq_core::agent::QTable;
use graspq_core::gqn::Gqn;
use graspq_core::servo::Model;
use graspq_core::tensornet::{decode_params, encode_params, ParamSet, Tensor};

use crate::config::{fnv1a, RunConfig};
use crate::error::{io_err, HarnessError, Result};

pub const MAGIC: &[u8; 4] = b"GQCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub episodes: u64,
    pub model: Model,
}

fn table_params(table: &QTable) -> graspq_core::Result<ParamSet> {
    let n = table.len().max(1);
    let mut states = vec![0.0; n];
    let mut values = vec![0.0; n * table.action_count()];
    for (i, (s, row)) in table.iter().enumerate() {
        states[i] = s as f64;
        values[i * row.len()..(i + 1) * row.len()].copy_from_slice(row);
    }
    let mut p = ParamSet::new();
    p.push("qtable.states", Tensor::new(vec![n], states)?, false)?;
    p.push(
        "qtable.values",
        Tensor::new(vec![n, table.action_count()], values)?,
        false,
    )?;
    p.push("qtable.len", Tensor::scalar(table.len() as f64), false)?;
    Ok(p)
}

fn table_from(p: &ParamSet) -> Option<QTable> {
    let len = p.get("qtable.len")?.data()[0] as usize;
    let states = p.get("qtable.states")?;
    let values = p.get("qtable.values")?;
    let width = *values.shape().get(1)?;
    let mut t = QTable::new(width);
    for i in 0..len {
        let s = states.data()[i] as u64;
        for a in 0..width {
            t.set(s, a, values.data()[i * width + a]);
        }
    }
    Some(t)
}

pub fn encode(ck: &Checkpoint) -> Result<Vec<u8>> {
    let params = match &ck.model {
        Model::Network { params, .. } => params.clone(),
        Model::Table(t) => table_params(t)?,
    };
    let payload = encode_params(&params);
    let text = ck.config.to_text();
    let mut out = Vec::with_capacity(payload.len() + text.len() + 40);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&fnv1a(text.as_bytes()).to_le_bytes());
    out.extend_from_slice(&ck.episodes.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    let mut at = 0usize;
    let mut take = |n: usize| -> std::result::Result<&[u8], String> {
        let s = bytes
            .get(at..at + n)
            .ok_or_else(|| format!("truncated at byte {at}"))?;
        at += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let hash = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let episodes = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let text_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let text = std::str::from_utf8(take(text_len)?).map_err(|e| e.to_string())?;
    if fnv1a(text.as_bytes()) != hash {
        return Err("config hash does not match the embedded config".into());
    }
    let config = RunConfig::parse(text).map_err(|e| format!("embedded config: {e}"))?;
    let payload_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let payload = take(payload_len)?;
    if at != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - at));
    }
    let params = decode_params(payload).map_err(|e| e.to_string())?;
    let model = if params.get("qtable.values").is_some() {
        Model::Table(table_from(&params).ok_or("malformed tabular payload")?)
    } else {
        let gqn = Gqn::new(config.train.network.clone()).map_err(|e| e.to_string())?;
        let expected = gqn.build(0).map_err(|e| e.to_string())?;
        let mut loaded = expected;
        loaded
            .load_values(&params)
            .map_err(|e| format!("payload does not fit the configured network: {e}"))?;
        Model::Network { gqn, params: loaded }
    };
    Ok(Checkpoint {
        config,
        episodes,
        model,
    })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    fs::write(path, encode(ck)?).map_err(io_err(path))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes).map_err(|message| HarnessError::Checkpoint {
        path: path.to_path_buf(),
        message,
    })
}

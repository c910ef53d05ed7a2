//! Binary model container.
//!
//! ```text
//! "SQTG"            4 bytes
//! version           u32 LE
//! config length     u32 LE
//! config            UTF-8 JSON {"tagger": …, "pipeline": …}
//! parameter count   u64 LE
//! parameters        f64 LE, block order of Params::blocks
//! checksum          u64 LE, FNV-1a over every preceding byte
//! ```

use std::io::{Read, Write};

use serde_json::{json, Value};

use super::tagger::{Params, Tagger, TaggerConfig};
use super::ModelError;
use crate::numerics::fnv1a64;

pub const MAGIC: &[u8; 4] = b"SQTG";
pub const VERSION: u32 = 1;

/// Write `tagger` and an opaque feature-pipeline record.
pub fn save_model<W: Write>(tagger: &Tagger, pipeline: &Value, mut out: W) -> Result<(), ModelError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let record = json!({ "tagger": tagger.config, "pipeline": pipeline });
    let text = serde_json::to_vec(&record).map_err(|e| ModelError::BadConfigRecord(e.to_string()))?;
    buf.extend_from_slice(&(text.len() as u32).to_le_bytes());
    buf.extend_from_slice(&text);
    let flat = tagger.params.to_flat();
    buf.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in flat {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let sum = fnv1a64(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).ok_or(ModelError::TruncatedFile)?;
        if end > self.bytes.len() {
            return Err(ModelError::TruncatedFile);
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Read a model written by [`save_model`]. Returns the tagger and the
/// pipeline record.
pub fn load_model<R: Read>(mut input: R) -> Result<(Tagger, Value), ModelError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4).map_err(|_| ModelError::BadMagic)? != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(ModelError::UnsupportedVersion(version));
    }
    let len = cur.u32()? as usize;
    let text = cur.take(len)?;
    let count = cur.u64()? as usize;
    let data = cur.take(count.checked_mul(8).ok_or(ModelError::TruncatedFile)?)?;
    let body_end = cur.pos;
    let stored = cur.u64()?;
    if fnv1a64(&bytes[..body_end]) != stored {
        return Err(ModelError::ChecksumMismatch);
    }

    let mut record: Value = serde_json::from_slice(text).map_err(|e| ModelError::BadConfigRecord(e.to_string()))?;
    let config: TaggerConfig = serde_json::from_value(record.get("tagger").cloned().unwrap_or(Value::Null))
        .map_err(|e| ModelError::BadConfigRecord(e.to_string()))?;
    config.validate()?;
    let pipeline = record.get_mut("pipeline").map(Value::take).unwrap_or(Value::Null);

    let mut params = Params::zeros(&config);
    if params.num_params() != count {
        return Err(ModelError::BadConfigRecord(format!(
            "configuration implies {} parameters, file holds {}",
            params.num_params(),
            count
        )));
    }
    let flat: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    params.set_flat(&flat);
    Ok((Tagger { config, params }, pipeline))
}

//! Binary checkpoint.
//!
//! ```text
//! "LHDR"  u16 version
//! u32 length, key=value text (model config plus meta.* entries)
//! u32 record count
//! per record: u16 name length, name, 4 x u32 dims, f32 data
//! ```
//! All integers and floats are little-endian. Every layer contributes a
//! `<layer>.weight` and a `<layer>.bias` record.

use std::collections::HashMap;
use std::path::Path;

use lhdr_tensor::{Dims, Tensor};

use super::{Model, ModelConfig};
use crate::kv::KeyValues;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"LHDR";

/// A model together with free-form metadata (training state, provenance).
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    /// Keys are stored with a `meta.` prefix, which is stripped here.
    pub meta: KeyValues,
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Checkpoint {
            model,
            meta: KeyValues::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, write_checkpoint(self)).map_err(|e| Error::from(e).in_file(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
        read_checkpoint(&bytes).map_err(|e| e.in_file(path))
    }
}

pub fn write_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let model = &ck.model;
    let mut kv = model.config().to_kv();
    for (k, v) in ck.meta.iter() {
        kv.set(&format!("meta.{k}"), v);
    }
    let text = kv.to_text();
    let mut out = Vec::with_capacity(64 + text.len() + model.param_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(2 * model.layers().len() as u32).to_le_bytes());
    for (i, layer) in model.layers().iter().enumerate() {
        for (suffix, t) in [("weight", &model.weights[i]), ("bias", &model.biases[i])] {
            let name = format!("{}.{suffix}", layer.name);
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            for d in t.dims().as_array() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
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
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let len = r.u32("config length")? as usize;
    let text = std::str::from_utf8(r.take(len, "config")?)
        .map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
    let kv = KeyValues::parse(text)?;
    let mut meta = KeyValues::new();
    for (k, v) in kv.iter() {
        if let Some(k) = k.strip_prefix("meta.") {
            meta.set(k, v);
        } else if !ModelConfig::keys().contains(&k) {
            return Err(Error::Checkpoint(format!("unknown config key {k}")));
        }
    }
    let cfg = ModelConfig::from_kv(&kv)?;

    let count = r.u32("record count")? as usize;
    let mut named = HashMap::new();
    for _ in 0..count {
        let nlen = r.u16("record name length")? as usize;
        let name = std::str::from_utf8(r.take(nlen, "record name")?)
            .map_err(|_| Error::Checkpoint("record name is not UTF-8".into()))?
            .to_string();
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32("record dims")? as usize;
        }
        let elems = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&e| e <= (bytes.len() - r.pos) / 4)
            .ok_or_else(|| Error::Checkpoint(format!("record {name} is truncated")))?;
        let data = r
            .take(elems * 4, &name)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::from_vec(Dims::from(dims), data)?;
        if named.insert(name.clone(), t).is_some() {
            return Err(Error::Checkpoint(format!("duplicate record {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint {
        model: Model::from_named(&cfg, named)?,
        meta,
    })
}

//! Single-file tensor archive:
//!
//! ```text
//! "DADACKP1" | u64 LE header length | JSON header | f64 LE tensor data
//! ```
//!
//! The header records the config hash, iteration counter, free-form metadata
//! and, per tensor, its name, shape and element offset into the data block.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{ParamStore, Tensor};
use crate::{Error, Result};

pub const ARCHIVE_MAGIC: &[u8; 8] = b"DADACKP1";

#[derive(Serialize, Deserialize)]
struct Header {
    config_hash: String,
    iteration: u64,
    meta: serde_json::Value,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: [usize; 4],
    offset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    pub config_hash: String,
    pub iteration: u64,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Archive {
    pub fn new(config_hash: impl Into<String>, iteration: u64) -> Self {
        Archive {
            config_hash: config_hash.into(),
            iteration,
            meta: serde_json::Value::Null,
            tensors: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Every tensor of `store`, named `{prefix}{param name}`.
    pub fn insert_store(&mut self, prefix: &str, store: &ParamStore) {
        for (_, name, t) in store.iter() {
            self.insert(format!("{prefix}{name}"), t.clone());
        }
    }

    /// Overwrites every tensor of `store` from `{prefix}{param name}`. The
    /// archive must hold exactly the store's names under `prefix`, with
    /// matching shapes.
    pub fn load_store(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        let stored = self.tensors.iter().filter(|(n, _)| n.starts_with(prefix)).count();
        if stored != store.len() {
            return Err(Error::Checkpoint(format!(
                "`{prefix}` holds {stored} tensors, model expects {}",
                store.len()
            )));
        }
        let ids: Vec<_> = store.iter().map(|(id, name, _)| (id, name.to_string())).collect();
        for (id, name) in ids {
            let key = format!("{prefix}{name}");
            let t = self
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{key}`")))?;
            if t.shape() != store.get(id).shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{key}` has shape {:?}, model expects {:?}",
                    t.shape(),
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = t.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let tensors = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let e = Entry {
                    name: name.clone(),
                    shape: t.shape(),
                    offset,
                };
                offset += t.len();
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            config_hash: self.config_hash.clone(),
            iteration: self.iteration,
            meta: self.meta.clone(),
            tensors,
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + offset * 8);
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != ARCHIVE_MAGIC {
            return Err(bad("not a checkpoint archive (bad magic)"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let data_start = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..data_start])?;
        let data = &bytes[data_start..];
        if data.len() % 8 != 0 {
            return Err(bad("data block is not a whole number of f64 values"));
        }
        let values: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let len: usize = e.shape.iter().product();
            let slice = values
                .get(e.offset..e.offset + len)
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{}` runs past the data block", e.name)))?;
            tensors.push((e.name, Tensor::from_vec(e.shape, slice.to_vec())));
        }
        Ok(Archive {
            config_hash: header.config_hash,
            iteration: header.iteration,
            meta: header.meta,
            tensors,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        // Write then rename so an interrupted save never leaves a torn file.
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

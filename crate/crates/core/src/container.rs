//! Binary container for model weights and datasets.
//!
//! Layout: magic `HIM1`, format version (u32 LE), header length (u64 LE), a
//! UTF-8 JSON header, then the raw f64 LE payload of every tensor in
//! row-major order. The header lists each tensor as
//! `{name, dtype: "f64", shape, byte_offset}` (offsets relative to the start
//! of the payload) next to a free-form `metadata` object.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HIM1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(Error::Format(format!(
                "tensor '{name}' has shape {shape:?} but {} values",
                data.len()
            )));
        }
        Ok(Self { name, shape, data })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    byte_offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    tensors: Vec<TensorEntry>,
    metadata: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub metadata: Value,
    pub tensors: Vec<Tensor>,
}

impl Default for Container {
    fn default() -> Self {
        Self { metadata: Value::Object(Default::default()), tensors: Vec::new() }
    }
}

impl Container {
    pub fn new(metadata: Value) -> Self {
        Self { metadata, tensors: Vec::new() }
    }

    pub fn push(&mut self, tensor: Tensor) {
        self.tensors.push(tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("missing tensor '{name}'")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let mut entries = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            entries.push(TensorEntry {
                name: t.name.clone(),
                dtype: "f64".into(),
                shape: t.shape.clone(),
                byte_offset: offset,
            });
            offset += 8 * t.data.len() as u64;
        }
        let header = serde_json::to_vec(&Header { tensors: entries, metadata: self.metadata.clone() })?;
        let mut out = Vec::with_capacity(16 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Format("file too short for a container preamble".into()));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let hend = 16u64
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len() as u64)
            .ok_or_else(|| Error::Format("header extends past end of file".into()))? as usize;
        let header: Header = serde_json::from_slice(&bytes[16..hend])
            .map_err(|e| Error::Format(format!("malformed header: {e}")))?;
        let payload = &bytes[hend..];
        let mut expected = 0u64;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            if e.dtype != "f64" {
                return Err(Error::Format(format!("tensor '{}' has unsupported dtype '{}'", e.name, e.dtype)));
            }
            if e.byte_offset != expected {
                return Err(Error::Format(format!(
                    "tensor '{}' starts at byte {} but {} was expected",
                    e.name, e.byte_offset, expected
                )));
            }
            let count = e
                .shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
                .and_then(|c| c.checked_mul(8))
                .ok_or_else(|| Error::Format(format!("tensor '{}' shape overflows", e.name)))?;
            let end = expected + count;
            if end > payload.len() as u64 {
                return Err(Error::Format(format!(
                    "tensor '{}' with shape {:?} needs {} payload bytes, only {} remain",
                    e.name,
                    e.shape,
                    count,
                    payload.len() as u64 - expected.min(payload.len() as u64)
                )));
            }
            let data = payload[expected as usize..end as usize]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Tensor { name: e.name, shape: e.shape, data });
            expected = end;
        }
        if expected != payload.len() as u64 {
            return Err(Error::Format(format!(
                "payload has {} bytes but the header accounts for {}",
                payload.len(),
                expected
            )));
        }
        Ok(Self { metadata: header.metadata, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

//! Versioned binary container for named tensors plus JSON metadata.
//!
//! Layout (little endian):
//!
//! ```text
//! magic    8 bytes  "TINTLINE"
//! version  u32
//! hlen     u64      length of the JSON header
//! header   hlen bytes
//! data     concatenated raw tensor payloads, offsets given in the header
//! ```
//!
//! The header holds the architecture tag, free-form metadata and a tensor index.
//! Tensors are written in name order, so equal contents give equal bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::data::io::write_atomic;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TINTLINE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<i64>,
    offset: u64,
    nbytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    architecture_tag: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

pub struct Container {
    pub architecture_tag: String,
    pub meta: serde_json::Value,
    pub tensors: BTreeMap<String, Tensor>,
}

fn dtype_name(kind: Kind) -> Result<&'static str> {
    match kind {
        Kind::Float => Ok("f32"),
        Kind::Double => Ok("f64"),
        other => Err(Error::Checkpoint(format!("unsupported tensor kind {other:?}"))),
    }
}

impl Container {
    pub fn new(architecture_tag: impl Into<String>, meta: serde_json::Value) -> Self {
        Container {
            architecture_tag: architecture_tag.into(),
            meta,
            tensors: BTreeMap::new(),
        }
    }

    /// Insert every tensor of `section` under `"{prefix}/{name}"`.
    pub fn insert_section(&mut self, prefix: &str, section: BTreeMap<String, Tensor>) {
        for (name, t) in section {
            self.tensors.insert(format!("{prefix}/{name}"), t);
        }
    }

    /// Tensors under `"{prefix}/"`, with the prefix removed.
    pub fn section(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        let key = format!("{prefix}/");
        self.tensors
            .iter()
            .filter_map(|(n, t)| n.strip_prefix(&key).map(|rest| (rest.to_string(), t.shallow_clone())))
            .collect()
    }

    pub fn expect_tag(&self, expected: &str) -> Result<()> {
        if self.architecture_tag != expected {
            return Err(Error::ArchitectureMismatch {
                expected: expected.to_string(),
                found: self.architecture_tag.clone(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut data = Vec::new();
        for (name, t) in &self.tensors {
            let t = t.detach().contiguous();
            let dtype = dtype_name(t.kind())?;
            let start = data.len() as u64;
            match t.kind() {
                Kind::Double => {
                    let v: Vec<f64> = Vec::try_from(&t.view([-1]))?;
                    v.iter().for_each(|x| data.extend_from_slice(&x.to_le_bytes()));
                }
                _ => {
                    let v: Vec<f32> = Vec::try_from(&t.view([-1]))?;
                    v.iter().for_each(|x| data.extend_from_slice(&x.to_le_bytes()));
                }
            }
            entries.push(TensorEntry {
                name: name.clone(),
                dtype: dtype.to_string(),
                shape: t.size(),
                offset: start,
                nbytes: data.len() as u64 - start,
            });
        }
        let header = serde_json::to_vec(&Header {
            architecture_tag: self.architecture_tag.clone(),
            meta: self.meta.clone(),
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(20 + header.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a tintline container (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported container version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..header_end])?;
        let data = &bytes[header_end..];
        let mut tensors = BTreeMap::new();
        for e in header.tensors {
            let start = e.offset as usize;
            let end = start
                .checked_add(e.nbytes as usize)
                .filter(|&end| end <= data.len())
                .ok_or_else(|| Error::Checkpoint(format!("tensor {} out of bounds", e.name)))?;
            let raw = &data[start..end];
            let numel: i64 = e.shape.iter().product();
            let t = match e.dtype.as_str() {
                "f64" => {
                    let v: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect();
                    Tensor::from_slice(&v)
                }
                "f32" => {
                    let v: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4"))).collect();
                    Tensor::from_slice(&v)
                }
                other => return Err(Error::Checkpoint(format!("unknown dtype {other}"))),
            };
            if t.numel() as i64 != numel {
                return Err(Error::Checkpoint(format!("tensor {} has wrong payload size", e.name)));
            }
            tensors.insert(e.name, t.view(e.shape.as_slice()));
        }
        Ok(Container {
            architecture_tag: header.architecture_tag,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Architecture tag and metadata only, without reading tensor payloads.
    pub fn peek(path: &Path) -> Result<(String, serde_json::Value)> {
        use std::io::Read;
        let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut prefix = [0u8; 20];
        file.read_exact(&mut prefix)
            .map_err(|_| Error::Checkpoint("not a tintline container (too short)".into()))?;
        if &prefix[..8] != MAGIC {
            return Err(Error::Checkpoint("not a tintline container (bad magic)".into()));
        }
        let version = u32::from_le_bytes(prefix[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported container version {version}")));
        }
        let hlen = u64::from_le_bytes(prefix[12..20].try_into().expect("8 bytes"));
        let mut header = Vec::new();
        file.take(hlen).read_to_end(&mut header).map_err(|e| Error::io(path, e))?;
        if header.len() as u64 != hlen {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&header)?;
        Ok((header.architecture_tag, header.meta))
    }
}

//! Self-describing binary container for named tensors.
//!
//! Layout: the 8-byte magic `CLNMTNSR`, a little-endian `u64` header length,
//! a JSON header (`format`, `kind`, `dtype`, `meta`, and the tensor names and
//! shapes in storage order), then the raw little-endian tensor data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{LanguageModel, ModelConfig, ParamSet, TransformerLm};
use crate::error::{Error, Result};
use crate::tensor::{DType, Element, Tensor};

const MAGIC: &[u8; 8] = b"CLNMTNSR";
const FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContainerKind {
    Model,
    LoraAdapters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container<T> {
    pub kind: ContainerKind,
    pub meta: serde_json::Value,
    pub tensors: BTreeMap<String, Tensor<T>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: u32,
    kind: ContainerKind,
    dtype: DType,
    meta: serde_json::Value,
    tensors: Vec<(String, Vec<usize>)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_container<T: Element>(c: &Container<T>) -> Vec<u8> {
    let header = Header {
        format: FORMAT,
        kind: c.kind,
        dtype: T::DTYPE,
        meta: c.meta.clone(),
        tensors: c.tensors.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in c.tensors.values() {
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn read_container<T: Element>(bytes: &[u8]) -> Result<Container<T>> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a tensor container (bad magic)"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(format!("header: {e}")))?;
    if header.format != FORMAT {
        return Err(bad(format!("unsupported format {}", header.format)));
    }
    if header.dtype != T::DTYPE {
        return Err(bad(format!("stored as {:?}, requested {:?}", header.dtype, T::DTYPE)));
    }
    let width = T::DTYPE.size_of();
    let mut at = 16 + hlen;
    let mut tensors = BTreeMap::new();
    for (name, shape) in header.tensors {
        let n: usize = shape.iter().product();
        let raw = bytes.get(at..at + n * width).ok_or_else(|| bad(format!("truncated data for `{name}`")))?;
        let data = raw.chunks_exact(width).map(T::read_le).collect();
        at += n * width;
        let t = Tensor::new(shape, data).map_err(|e| bad(format!("`{name}`: {e}")))?;
        tensors.insert(name, t);
    }
    if at != bytes.len() {
        return Err(bad("trailing bytes after tensor data"));
    }
    Ok(Container { kind: header.kind, meta: header.meta, tensors })
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    config: ModelConfig,
    tokenizer: Option<String>,
}

impl<T: Element> TransformerLm<T> {
    /// Serializes parameters, config and the tokenizer fingerprint.
    pub fn to_checkpoint(&self, tokenizer: Option<&str>) -> Vec<u8> {
        let meta = ModelMeta { config: self.config().clone(), tokenizer: tokenizer.map(str::to_string) };
        write_container(&Container {
            kind: ContainerKind::Model,
            meta: serde_json::to_value(meta).expect("meta serializes"),
            tensors: self.params().clone().into_map(),
        })
    }

    /// Inverse of [`TransformerLm::to_checkpoint`]; also returns the stored
    /// tokenizer fingerprint.
    pub fn from_checkpoint(bytes: &[u8]) -> Result<(Self, Option<String>)> {
        let c = read_container::<T>(bytes)?;
        if c.kind != ContainerKind::Model {
            return Err(bad("container does not hold a model"));
        }
        let meta: ModelMeta = serde_json::from_value(c.meta).map_err(|e| bad(format!("model meta: {e}")))?;
        let model = TransformerLm::from_params(meta.config, ParamSet::from_map(c.tensors))?;
        Ok((model, meta.tokenizer))
    }
}

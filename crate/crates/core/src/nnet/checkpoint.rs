//! Binary checkpoints: a 4-byte magic, a `u32` LE version, a `u32` LE
//! length-prefixed JSON metadata block, then tensor payloads in manifest
//! order. Offsets in the manifest are relative to the payload start.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{build_model, Model, ModelConfig};
use super::NnetError;

pub const FLOAT_MAGIC: [u8; 4] = *b"STRN";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// `f32`, or `t2` for an `f32` scale followed by packed trits.
    pub dtype: String,
    pub offset: u64,
    pub nbytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub epoch: u64,
    pub adam_step: u64,
    pub tensors: Vec<ManifestEntry>,
}

/// Accumulates tensor payloads and their manifest.
#[derive(Debug, Default)]
pub(crate) struct PayloadWriter {
    pub entries: Vec<ManifestEntry>,
    pub bytes: Vec<u8>,
}

impl PayloadWriter {
    pub fn push_raw(&mut self, name: &str, shape: &[usize], dtype: &str, data: &[u8]) {
        self.entries.push(ManifestEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            dtype: dtype.to_string(),
            offset: self.bytes.len() as u64,
            nbytes: data.len() as u64,
        });
        self.bytes.extend_from_slice(data);
    }

    pub fn push_f32(&mut self, name: &str, shape: &[usize], values: &[f64]) {
        let data: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        self.push_raw(name, shape, "f32", &data);
    }
}

pub(crate) fn encode(magic: [u8; 4], meta: &CheckpointMeta, payload: &[u8]) -> Result<Vec<u8>, NnetError> {
    let json = serde_json::to_vec(meta).map_err(|e| NnetError::Format { offset: HEADER_LEN as u64, reason: e.to_string() })?;
    let mut out = Vec::with_capacity(HEADER_LEN + json.len() + payload.len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    Ok(out)
}

fn format_err(offset: usize, reason: impl Into<String>) -> NnetError {
    NnetError::Format { offset: offset as u64, reason: reason.into() }
}

/// A parsed container: metadata plus the payload and its file offset.
pub(crate) struct Container<'a> {
    pub meta: CheckpointMeta,
    pub payload: &'a [u8],
    pub payload_offset: usize,
}

impl<'a> Container<'a> {
    pub fn tensor(&self, entry: &ManifestEntry) -> &'a [u8] {
        let s = entry.offset as usize;
        &self.payload[s..s + entry.nbytes as usize]
    }

    pub fn find(&self, name: &str) -> Result<&ManifestEntry, NnetError> {
        self.meta
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| format_err(self.payload_offset, format!("missing tensor {name}")))
    }

    pub fn read_f32(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>, NnetError> {
        let e = self.find(name)?;
        let at = self.payload_offset + e.offset as usize;
        if e.dtype != "f32" || e.shape != shape {
            return Err(format_err(
                at,
                format!("tensor {name}: expected f32 {shape:?}, found {} {:?}", e.dtype, e.shape),
            ));
        }
        let n: usize = shape.iter().product();
        if e.nbytes as usize != 4 * n {
            return Err(format_err(at, format!("tensor {name}: {} bytes for {n} values", e.nbytes)));
        }
        Ok(self
            .tensor(e)
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect())
    }
}

pub(crate) fn decode(bytes: &[u8], magic: [u8; 4]) -> Result<Container<'_>, NnetError> {
    if bytes.len() < 4 {
        return Err(format_err(bytes.len(), "truncated before magic"));
    }
    if bytes[..4] != magic {
        return Err(format_err(0, format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(&magic)
        )));
    }
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), "truncated header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let meta_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let payload_offset = HEADER_LEN + meta_len;
    if bytes.len() < payload_offset {
        return Err(format_err(bytes.len(), format!("truncated metadata (declared {meta_len} bytes)")));
    }
    let meta: CheckpointMeta = serde_json::from_slice(&bytes[HEADER_LEN..payload_offset])
        .map_err(|e| format_err(HEADER_LEN, format!("metadata: {e}")))?;
    let payload = &bytes[payload_offset..];
    let mut expected = 0u64;
    for e in &meta.tensors {
        if e.offset != expected {
            return Err(format_err(
                payload_offset + e.offset as usize,
                format!("tensor {} not contiguous (expected payload offset {expected})", e.name),
            ));
        }
        expected += e.nbytes;
        if expected as usize > payload.len() {
            return Err(format_err(
                bytes.len(),
                format!("truncated payload in tensor {} (needs {} bytes)", e.name, payload_offset as u64 + expected),
            ));
        }
    }
    if (expected as usize) < payload.len() {
        return Err(format_err(payload_offset + expected as usize, "trailing bytes after payload"));
    }
    Ok(Container { meta, payload, payload_offset })
}

pub fn checkpoint_bytes(model: &Model) -> Result<Vec<u8>, NnetError> {
    let mut w = PayloadWriter::default();
    for p in &model.params {
        w.push_f32(&p.name, &p.shape, &p.value);
    }
    for b in &model.buffers {
        w.push_f32(&b.name, &b.shape, &b.value);
    }
    for (i, p) in model.params.iter().enumerate() {
        w.push_f32(&format!("adam.m/{}", p.name), &p.shape, &model.adam.m[i]);
        w.push_f32(&format!("adam.v/{}", p.name), &p.shape, &model.adam.v[i]);
    }
    let meta = CheckpointMeta {
        config: model.config.clone(),
        epoch: model.epoch,
        adam_step: model.adam.step,
        tensors: w.entries,
    };
    encode(FLOAT_MAGIC, &meta, &w.bytes)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Model, NnetError> {
    let c = decode(bytes, FLOAT_MAGIC)?;
    let mut model = build_model(&c.meta.config, 0).map_err(|e| format_err(HEADER_LEN, e.to_string()))?;
    for i in 0..model.params.len() {
        let (name, shape) = (model.params[i].name.clone(), model.params[i].shape.clone());
        model.params[i].value = c.read_f32(&name, &shape)?;
        model.adam.m[i] = c.read_f32(&format!("adam.m/{name}"), &shape)?;
        model.adam.v[i] = c.read_f32(&format!("adam.v/{name}"), &shape)?;
    }
    for b in &mut model.buffers {
        b.value = c.read_f32(&b.name, &b.shape)?;
    }
    model.adam.step = c.meta.adam_step;
    model.epoch = c.meta.epoch;
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), NnetError> {
    std::fs::write(path, checkpoint_bytes(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model, NnetError> {
    model_from_bytes(&std::fs::read(path)?)
}

/// Magic and metadata of any checkpoint container.
pub fn read_manifest(path: &Path) -> Result<([u8; 4], CheckpointMeta), NnetError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 4 {
        return Err(format_err(bytes.len(), "truncated before magic"));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    Ok((magic, decode(&bytes, magic)?.meta))
}

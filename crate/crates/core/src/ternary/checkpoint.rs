//! Ternary checkpoints: the float container under magic `STRT`, with each
//! ternarized tensor stored as dtype `t2` (an `f32` scale followed by packed
//! trits). Optimizer state is not included.

use std::path::Path;

use super::pack::{pack_trits, packed_len, unpack_trits};
use super::ShadowState;
use crate::nnet::{build_model, decode, encode, CheckpointMeta, Model, NnetError, PayloadWriter};

pub const TERNARY_MAGIC: [u8; 4] = *b"STRT";

pub fn ternary_checkpoint_bytes(model: &Model, state: &ShadowState) -> Result<Vec<u8>, NnetError> {
    let mut w = PayloadWriter::default();
    for (i, p) in model.params.iter().enumerate() {
        match state.shadows.iter().position(|(idx, _)| *idx == i) {
            Some(j) => {
                let t = &state.ternary[j];
                let mut data = (t.alpha as f32).to_le_bytes().to_vec();
                data.extend(pack_trits(&t.trits).map_err(|e| NnetError::Shape(e.to_string()))?);
                w.push_raw(&p.name, &p.shape, "t2", &data);
            }
            None => w.push_f32(&p.name, &p.shape, &p.value),
        }
    }
    for b in &model.buffers {
        w.push_f32(&b.name, &b.shape, &b.value);
    }
    let meta = CheckpointMeta { config: model.config.clone(), epoch: model.epoch, adam_step: 0, tensors: w.entries };
    encode(TERNARY_MAGIC, &meta, &w.bytes)
}

/// Rebuilds the model with every `t2` tensor expanded to `alpha * T`.
pub fn ternary_model_from_bytes(bytes: &[u8]) -> Result<Model, NnetError> {
    let c = decode(bytes, TERNARY_MAGIC)?;
    let mut model = build_model(&c.meta.config, 0)
        .map_err(|e| NnetError::Format { offset: 12, reason: e.to_string() })?;
    for p in &mut model.params {
        let e = c.find(&p.name)?;
        let at = (c.payload_offset + e.offset as usize) as u64;
        if e.shape != p.shape {
            return Err(NnetError::Format { offset: at, reason: format!("tensor {}: shape {:?}", p.name, e.shape) });
        }
        p.value = match e.dtype.as_str() {
            "t2" => {
                let n = p.value.len();
                let raw = c.tensor(e);
                if raw.len() != 4 + packed_len(n) {
                    return Err(NnetError::Format {
                        offset: at,
                        reason: format!("tensor {}: {} bytes for {n} trits", p.name, raw.len()),
                    });
                }
                let alpha = f64::from(f32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]));
                let trits = unpack_trits(&raw[4..], n)
                    .map_err(|err| NnetError::Format { offset: at + 4, reason: format!("tensor {}: {err}", p.name) })?;
                trits.iter().map(|&t| alpha * f64::from(t)).collect()
            }
            _ => c.read_f32(&p.name, &p.shape)?,
        };
    }
    for b in &mut model.buffers {
        b.value = c.read_f32(&b.name, &b.shape)?;
    }
    model.epoch = c.meta.epoch;
    Ok(model)
}

pub fn save_ternary_checkpoint(model: &Model, state: &ShadowState, path: &Path) -> Result<(), NnetError> {
    std::fs::write(path, ternary_checkpoint_bytes(model, state)?)?;
    Ok(())
}

pub fn load_ternary_checkpoint(path: &Path) -> Result<Model, NnetError> {
    ternary_model_from_bytes(&std::fs::read(path)?)
}

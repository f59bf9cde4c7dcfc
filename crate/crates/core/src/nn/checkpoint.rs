//! Checkpoint file: `EMCK`, version, JSON header, then little-endian f32
//! blobs (parameters in declared order, input mean, input scale).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{InputNorm, Offsets, TdsConfig, TdsModel};
use crate::error::{Error, Result};
use crate::io::{Vocab, VocabKind};
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub config: TdsConfig,
    pub vocab_kind: VocabKind,
    pub vocab_size: usize,
    /// Hex FNV-1a fingerprint of the vocabulary symbols.
    pub vocab_hash: String,
    pub seed: u64,
    pub param_count: usize,
    pub epoch: usize,
}

impl CheckpointHeader {
    pub fn new<T: Real>(model: &TdsModel<T>, vocab: &Vocab, seed: u64, epoch: usize) -> Self {
        Self {
            config: model.config.clone(),
            vocab_kind: vocab.kind,
            vocab_size: vocab.len(),
            vocab_hash: format!("{:016x}", vocab.fingerprint()),
            seed,
            param_count: model.params.len(),
            epoch,
        }
    }

    /// Errors unless `vocab` is the vocabulary the model was trained on.
    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        let hash = format!("{:016x}", vocab.fingerprint());
        if vocab.kind != self.vocab_kind || vocab.len() != self.vocab_size || hash != self.vocab_hash {
            return Err(Error::InvalidArgument(format!(
                "checkpoint vocabulary ({:?}, {} symbols, {}) does not match ({:?}, {} symbols, {hash})",
                self.vocab_kind,
                self.vocab_size,
                self.vocab_hash,
                vocab.kind,
                vocab.len()
            )));
        }
        Ok(())
    }
}

fn push_f32<T: Real>(out: &mut Vec<u8>, values: &[T]) {
    for v in values {
        out.extend_from_slice(&v.as_f32().to_le_bytes());
    }
}

pub fn encode_checkpoint<T: Real>(model: &TdsModel<T>, header: &CheckpointHeader) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * (model.params.len() + 2 * model.config.d_in()));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    push_f32(&mut out, &model.params);
    push_f32(&mut out, &model.norm.mean);
    push_f32(&mut out, &model.norm.scale);
    Ok(out)
}

pub fn save_checkpoint<T: Real>(model: &TdsModel<T>, header: &CheckpointHeader, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, encode_checkpoint(model, header)?)?;
    Ok(())
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<(TdsModel<T>, CheckpointHeader)> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    if word(4) != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {}", word(4))));
    }
    let json_len = word(8) as usize;
    let json = bytes.get(12..12 + json_len).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(json)?;
    header.config.validate()?;
    let n = Offsets::new(&header.config).total;
    if n != header.param_count {
        return Err(bad("parameter count disagrees with the architecture"));
    }
    let d = header.config.d_in();
    let blob = &bytes[12 + json_len..];
    if blob.len() != 4 * (n + 2 * d) {
        return Err(bad(&format!(
            "expected {} payload bytes, found {}",
            4 * (n + 2 * d),
            blob.len()
        )));
    }
    let values: Vec<T> = blob
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
        .collect();
    let norm = InputNorm {
        mean: values[n..n + d].to_vec(),
        scale: values[n + d..].to_vec(),
    };
    let model = TdsModel::from_parts(header.config.clone(), values[..n].to_vec(), norm)?;
    Ok((model, header))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<(TdsModel<T>, CheckpointHeader)> {
    decode_checkpoint(&fs::read(path)?)
}

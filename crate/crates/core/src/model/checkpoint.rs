//! Bit-exact model serialization.
//!
//! Layout: magic `BPRE1`, a JSON config block, the vocabulary fingerprint,
//! a parameter manifest (name, shape, byte offset), then one little-endian
//! f32 blob. Reloading reproduces forward outputs bitwise.

use super::head::{DownstreamModel, Head, HeadConfig};
use super::transformer::{EncoderLayerParams, FoundationModel, FoundationParams, LayerNormParams};
use super::{ModelConfig, ModelError};
use crate::corpus::Vocabulary;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 5] = b"BPRE1";

/// What kind of model a checkpoint holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointConfig {
    Foundation { model: ModelConfig },
    Downstream { model: ModelConfig, head: HeadConfig },
}

/// A deserialized checkpoint.
pub enum LoadedModel {
    Foundation(FoundationModel),
    Downstream(DownstreamModel),
}

impl LoadedModel {
    pub fn into_foundation(self) -> Result<FoundationModel, ModelError> {
        match self {
            LoadedModel::Foundation(m) => Ok(m),
            LoadedModel::Downstream(_) => Err(ModelError::Truncated(
                "expected a foundation checkpoint, found a downstream one".into(),
            )),
        }
    }

    pub fn into_downstream(self) -> Result<DownstreamModel, ModelError> {
        match self {
            LoadedModel::Downstream(m) => Ok(m),
            LoadedModel::Foundation(_) => Err(ModelError::Truncated(
                "expected a downstream checkpoint, found a foundation one".into(),
            )),
        }
    }
}

struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

fn collect_params(model: &FoundationModel, head: Option<&Head>) -> Vec<(String, Tensor)> {
    let mut out: Vec<(String, Tensor)> = Vec::new();
    model.visit_params(&mut |name: &str, t: &Tensor| out.push((name.to_string(), t.clone())));
    if let Some(head) = head {
        head.visit_params(&mut |name: &str, t: &Tensor| out.push((name.to_string(), t.clone())));
    }
    out
}

fn write_bytes(
    config: &CheckpointConfig,
    vocab_fingerprint: u64,
    params: &[(String, Tensor)],
) -> Result<Vec<u8>, ModelError> {
    let config_json = serde_json::to_vec(config)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&config_json);
    buf.extend_from_slice(&vocab_fingerprint.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, tensor) in params {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(tensor.shape().len() as u8);
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        buf.extend_from_slice(&offset.to_le_bytes());
        offset += (tensor.numel() * 4) as u64;
    }
    buf.extend_from_slice(&offset.to_le_bytes());
    for (_, tensor) in params {
        for v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

/// Serializes a foundation model. The write is atomic: a temp file in the
/// same directory is renamed over the target.
pub fn save_checkpoint(model: &FoundationModel, path: &Path) -> Result<(), ModelError> {
    let config = CheckpointConfig::Foundation {
        model: model.config().clone(),
    };
    let bytes = write_bytes(
        &config,
        model.vocab_fingerprint(),
        &collect_params(model, None),
    )?;
    atomic_write(path, &bytes)
}

/// Serializes a downstream model (foundation plus head).
pub fn save_downstream_checkpoint(model: &DownstreamModel, path: &Path) -> Result<(), ModelError> {
    let config = CheckpointConfig::Downstream {
        model: model.foundation.config().clone(),
        head: model.head.cfg.clone(),
    };
    let bytes = write_bytes(
        &config,
        model.foundation.vocab_fingerprint(),
        &collect_params(&model.foundation, Some(&model.head)),
    )?;
    atomic_write(path, &bytes)
}

pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), ModelError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelError::Truncated(format!(
                "need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }
}

/// Loads any checkpoint. When `expected_vocab` is given, a fingerprint
/// mismatch is a hard error.
pub fn load_checkpoint(
    path: &Path,
    expected_vocab: Option<&Vocabulary>,
) -> Result<LoadedModel, ModelError> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(5)? != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let config_len = r.u32()? as usize;
    let config: CheckpointConfig = serde_json::from_slice(r.take(config_len)?)?;
    let fingerprint = r.u64()?;
    if let Some(vocab) = expected_vocab {
        if vocab.fingerprint() != fingerprint {
            return Err(ModelError::FingerprintMismatch {
                expected: fingerprint,
                found: vocab.fingerprint(),
            });
        }
    }
    let n_params = r.u32()? as usize;
    let mut manifest = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| ModelError::Truncated("non-utf8 parameter name".into()))?;
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let offset = r.u64()?;
        manifest.push(ManifestEntry {
            name,
            shape,
            offset,
        });
    }
    let blob_len = r.u64()? as usize;
    let blob = r.take(blob_len)?;

    let mut tensors: HashMap<String, Tensor> = HashMap::with_capacity(manifest.len());
    for entry in &manifest {
        let numel: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + numel * 4;
        if end > blob.len() {
            return Err(ModelError::Truncated(format!(
                "parameter {} overruns blob ({} > {})",
                entry.name,
                end,
                blob.len()
            )));
        }
        let data: Vec<f32> = blob[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(entry.shape.clone(), data)
            .map_err(|e| ModelError::Truncated(format!("parameter {}: {e}", entry.name)))?;
        tensors.insert(entry.name.clone(), tensor);
    }

    let mut take = |name: &str| -> Result<Tensor, ModelError> {
        tensors
            .remove(name)
            .ok_or_else(|| ModelError::Truncated(format!("missing parameter {name}")))
    };

    let (model_cfg, head_cfg) = match &config {
        CheckpointConfig::Foundation { model } => (model.clone(), None),
        CheckpointConfig::Downstream { model, head } => (model.clone(), Some(head.clone())),
    };
    model_cfg.validate()?;

    let mut layers = Vec::with_capacity(model_cfg.n_layers);
    for i in 0..model_cfg.n_layers {
        layers.push(EncoderLayerParams {
            wq: take(&format!("layers.{i}.wq"))?,
            bq: take(&format!("layers.{i}.bq"))?,
            wk: take(&format!("layers.{i}.wk"))?,
            bk: take(&format!("layers.{i}.bk"))?,
            wv: take(&format!("layers.{i}.wv"))?,
            bv: take(&format!("layers.{i}.bv"))?,
            wo: take(&format!("layers.{i}.wo"))?,
            bo: take(&format!("layers.{i}.bo"))?,
            ln_attn: LayerNormParams {
                gain: take(&format!("layers.{i}.ln_attn.gain"))?,
                bias: take(&format!("layers.{i}.ln_attn.bias"))?,
            },
            w_ff1: take(&format!("layers.{i}.w_ff1"))?,
            b_ff1: take(&format!("layers.{i}.b_ff1"))?,
            w_ff2: take(&format!("layers.{i}.w_ff2"))?,
            b_ff2: take(&format!("layers.{i}.b_ff2"))?,
            ln_ffn: LayerNormParams {
                gain: take(&format!("layers.{i}.ln_ffn.gain"))?,
                bias: take(&format!("layers.{i}.ln_ffn.bias"))?,
            },
        });
    }
    let params = FoundationParams {
        tok_emb: take("tok_emb")?,
        pos_emb: take("pos_emb")?,
        seg_emb: take("seg_emb")?,
        ln_emb: LayerNormParams {
            gain: take("ln_emb.gain")?,
            bias: take("ln_emb.bias")?,
        },
        layers,
        ln_mlm: LayerNormParams {
            gain: take("ln_mlm.gain")?,
            bias: take("ln_mlm.bias")?,
        },
        mlm_bias: take("mlm_bias")?,
    };
    let foundation = FoundationModel::from_parts(model_cfg, fingerprint, params);

    match head_cfg {
        None => {
            if !tensors.is_empty() {
                return Err(ModelError::Truncated(format!(
                    "{} unexpected parameters in foundation checkpoint",
                    tensors.len()
                )));
            }
            Ok(LoadedModel::Foundation(foundation))
        }
        Some(cfg) => {
            let head = Head {
                w1: take("head.w1")?,
                b1: take("head.b1")?,
                w2: take("head.w2")?,
                b2: take("head.b2")?,
                cfg,
            };
            Ok(LoadedModel::Downstream(DownstreamModel::new(
                foundation, head,
            )))
        }
    }
}


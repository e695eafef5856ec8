//! `EMC1` checkpoints: the magic bytes, a little-endian `u32` header length,
//! a UTF-8 JSON header (format version, model and front-end configuration,
//! vocabulary, tensor directory with shapes and byte offsets), then each
//! tensor as row-major little-endian `f32`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{ConvBank, ModelParameters};
use crate::autodiff::Tensor;
use crate::data::FrontendConfig;
use crate::error::{Error, Result};
use crate::text::{EmbeddingTable, Vocabulary};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EMC1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    frontend: FrontendConfig,
    vocabulary: Vec<String>,
    embedding_trainable: bool,
    tensors: Vec<TensorEntry>,
}

/// Everything needed to run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub frontend: FrontendConfig,
    pub vocab: Vocabulary,
    pub params: ModelParameters,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let named = self.params.named_tensors();
        let mut offset = 0;
        let tensors = named
            .iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += t.len() * 4;
                e
            })
            .collect();
        let header = Header {
            format_version: FORMAT_VERSION,
            model: self.model.clone(),
            frontend: self.frontend.clone(),
            vocabulary: self.vocab.tokens().to_vec(),
            embedding_trainable: self.params.embedding.trainable,
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + json.len() + offset);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in named {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: String| Error::Checkpoint(m);
        if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(corrupt("missing EMC1 magic".into()));
        }
        let header_len = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
        let data_start = 8usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| corrupt("header length exceeds file size".into()))?;
        let header: Header = serde_json::from_slice(&bytes[8..data_start])
            .map_err(|e| corrupt(format!("unreadable header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "format version {} (this build reads {FORMAT_VERSION})",
                header.format_version
            )));
        }
        header.model.validate()?;
        header.frontend.validate()?;
        let vocab = Vocabulary::from_tokens(header.vocabulary.iter().skip(2).cloned());
        if vocab.tokens() != header.vocabulary.as_slice() {
            return Err(corrupt("vocabulary is not in canonical form".into()));
        }

        let data = &bytes[data_start..];
        let read_tensor = |entry: &TensorEntry| -> Result<Tensor> {
            let n: usize = entry.shape.iter().product();
            let end = entry
                .offset
                .checked_add(n * 4)
                .filter(|&e| e <= data.len())
                .ok_or_else(|| corrupt(format!("tensor `{}` runs past end of file", entry.name)))?;
            let values = data[entry.offset..end]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect();
            Tensor::new(entry.shape.clone(), values)
        };
        let tensors = header
            .tensors
            .iter()
            .map(|e| read_tensor(e).map(|t| (e.name.clone(), t)))
            .collect::<Result<Vec<_>>>()?;

        let cfg = &header.model;
        let mut it = tensors.into_iter();
        let mut next = |expected: String| -> Result<Tensor> {
            match it.next() {
                Some((name, t)) if name == expected => Ok(t),
                Some((name, _)) => Err(corrupt(format!("expected tensor `{expected}`, found `{name}`"))),
                None => Err(corrupt(format!("missing tensor `{expected}`"))),
            }
        };
        let mut banks = |branch: &str, sizes: &[usize]| -> Result<Vec<ConvBank>> {
            sizes
                .iter()
                .map(|&s| {
                    Ok(ConvBank {
                        kernel_size: s,
                        kernels: next(format!("{branch}.conv{s}.kernels"))?,
                        bias: next(format!("{branch}.conv{s}.bias"))?,
                    })
                })
                .collect()
        };
        let audio = banks("audio", &cfg.audio_kernel_sizes)?;
        let text = banks("text", &cfg.text_kernel_sizes)?;
        let params = ModelParameters {
            audio,
            text,
            fc_weight: next("fc.weight".into())?,
            fc_bias: next("fc.bias".into())?,
            out_weight: next("out.weight".into())?,
            out_bias: next("out.bias".into())?,
            embedding: EmbeddingTable {
                matrix: next("embedding".into())?,
                trainable: header.embedding_trainable,
            },
        };
        if let Some((name, _)) = it.next() {
            return Err(corrupt(format!("unexpected extra tensor `{name}`")));
        }
        params.check_shapes(cfg).map_err(|e| corrupt(e.to_string()))?;
        if params.embedding.vocab_size() != vocab.len() {
            return Err(corrupt(format!(
                "embedding has {} rows for a vocabulary of {}",
                params.embedding.vocab_size(),
                vocab.len()
            )));
        }
        Ok(Self {
            model: header.model,
            frontend: header.frontend,
            vocab,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{load_xvector, resolve_path, ManifestRecord};
use crate::autodiff::Tensor;
use crate::dsp::{load_wav, pad_or_truncate_audio, MfccConfig, MfccExtractor, MfccMatrix, AUDIO_FEATURE_DIM};
use crate::error::{Error, Result};
use crate::text::{token_ids, tokenize, EmbeddingTable, Vocabulary};

/// Which manifest field supplies the transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptSource {
    #[default]
    Reference,
    Asr,
}

/// Feature-extraction settings shared by training and inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendConfig {
    pub mfcc: MfccConfig,
    /// Audio longer than this is truncated, shorter is zero-padded.
    pub max_audio_seconds: f64,
    pub max_tokens: usize,
    pub transcript: TranscriptSource,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            mfcc: MfccConfig::default(),
            max_audio_seconds: 7.5,
            max_tokens: 128,
            transcript: TranscriptSource::Reference,
        }
    }
}

impl FrontendConfig {
    /// Fixed frame count of every audio feature matrix (748 by default).
    pub fn max_frames(&self) -> usize {
        self.mfcc.frames_for_seconds(self.max_audio_seconds)
    }

    pub fn validate(&self) -> Result<()> {
        self.mfcc.validate()?;
        if self.mfcc.feature_dim() != AUDIO_FEATURE_DIM {
            return Err(Error::config(
                "frontend.mfcc.n_mfcc",
                format!("stacked width must be {AUDIO_FEATURE_DIM}, got {}", self.mfcc.feature_dim()),
            ));
        }
        if self.max_frames() == 0 {
            return Err(Error::config(
                "frontend.max_audio_seconds",
                format!("{} s is shorter than one frame", self.max_audio_seconds),
            ));
        }
        if self.max_tokens == 0 {
            return Err(Error::config("frontend.max_tokens", "must be positive"));
        }
        Ok(())
    }
}

/// Model-ready features of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub id: String,
    /// `max_frames × 96`, zero rows after `audio_len`.
    pub audio: Tensor,
    pub audio_len: usize,
    /// Vocabulary rows of the real tokens (at most `max_tokens`).
    pub token_ids: Vec<usize>,
    pub max_tokens: usize,
    pub xvector: Option<Vec<f64>>,
    pub label: usize,
}

impl FeatureBundle {
    pub fn text_len(&self) -> usize {
        self.token_ids.len()
    }

    /// Zero-padded `max_tokens × dim` embedding matrix of the transcript.
    pub fn token_embeddings(&self, table: &EmbeddingTable) -> Tensor {
        let dim = table.dim();
        let mut data = vec![0.0; self.max_tokens * dim];
        for (i, &id) in self.token_ids.iter().enumerate() {
            data[i * dim..(i + 1) * dim].copy_from_slice(table.row(id));
        }
        Tensor::new(vec![self.max_tokens, dim], data).expect("consistent shape")
    }
}

/// Turns manifest records into [`FeatureBundle`]s.
#[derive(Debug, Clone)]
pub struct Extractor {
    frontend: FrontendConfig,
    mfcc: MfccExtractor,
    vocab: Vocabulary,
    xvector_dim: Option<usize>,
    base_dir: PathBuf,
}

impl Extractor {
    /// `xvector_dim` is `None` when x-vectors are not used; `base_dir`
    /// anchors relative paths in the records.
    pub fn new(
        frontend: FrontendConfig,
        vocab: Vocabulary,
        xvector_dim: Option<usize>,
        base_dir: impl Into<PathBuf>,
    ) -> Result<Self> {
        frontend.validate()?;
        Ok(Self {
            mfcc: MfccExtractor::new(frontend.mfcc.clone())?,
            frontend,
            vocab,
            xvector_dim,
            base_dir: base_dir.into(),
        })
    }

    pub fn frontend(&self) -> &FrontendConfig {
        &self.frontend
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn transcript<'a>(&self, record: &'a ManifestRecord) -> &'a str {
        match self.frontend.transcript {
            TranscriptSource::Reference => &record.transcript,
            TranscriptSource::Asr => record.asr_transcript.as_deref().unwrap_or(&record.transcript),
        }
    }

    /// Unpadded MFCC ‖ Δ ‖ ΔΔ of a record's audio.
    pub fn audio_features(&self, record: &ManifestRecord) -> Result<MfccMatrix> {
        let wav = load_wav(resolve_path(&self.base_dir, &record.wav_path))
            .map_err(|e| Error::record(&record.id, e.to_string()))?;
        self.mfcc
            .extract(&wav)
            .map_err(|e| Error::record(&record.id, e.to_string()))
    }

    pub fn extract(&self, record: &ManifestRecord) -> Result<FeatureBundle> {
        let mfcc = self.audio_features(record)?;
        self.bundle_from_features(record, &mfcc)
    }

    /// Builds a bundle from already computed audio features (e.g. an `EMF1`
    /// cache entry).
    pub fn bundle_from_features(&self, record: &ManifestRecord, mfcc: &MfccMatrix) -> Result<FeatureBundle> {
        let (padded, audio_len) = pad_or_truncate_audio(mfcc, self.frontend.max_frames());
        let tokens = tokenize(self.transcript(record));
        let ids = token_ids(&tokens, &self.vocab, self.frontend.max_tokens);
        if ids.is_empty() {
            return Err(Error::record(&record.id, "transcript has no tokens"));
        }
        let xvector = match (self.xvector_dim, &record.xvector_path) {
            (Some(dim), Some(p)) => Some(
                load_xvector(&resolve_path(&self.base_dir, p), dim)
                    .map_err(|e| Error::record(&record.id, e.to_string()))?,
            ),
            (Some(dim), None) => {
                return Err(Error::record(
                    &record.id,
                    format!("x-vector of dimension {dim} required but xvector_path is missing"),
                ))
            }
            (None, _) => None,
        };
        Ok(FeatureBundle {
            id: record.id.clone(),
            audio: padded.into_tensor(),
            audio_len,
            token_ids: ids,
            max_tokens: self.frontend.max_tokens,
            xvector,
            label: record.label.index(),
        })
    }

    /// Extracts every record in parallel; output order follows input order.
    pub fn extract_all(&self, records: &[ManifestRecord]) -> Result<Vec<FeatureBundle>> {
        records.par_iter().map(|r| self.extract(r)).collect()
    }
}

/// Fixed-shape stack of bundles.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `B × max_frames × 96`.
    pub audio: Tensor,
    pub audio_lens: Vec<usize>,
    /// `B × max_tokens × dim`.
    pub tokens: Tensor,
    pub text_lens: Vec<usize>,
    pub xvectors: Option<Vec<Vec<f64>>>,
    pub labels: Vec<usize>,
    pub bundles: Vec<FeatureBundle>,
}

/// Stacks already extracted bundles.
pub fn stack_bundles(bundles: Vec<FeatureBundle>, table: &EmbeddingTable) -> Result<Batch> {
    let Some(first) = bundles.first() else {
        return Err(Error::invalid("build_batch", "empty batch"));
    };
    let (frames, width) = (first.audio.rows(), first.audio.cols());
    let max_tokens = first.max_tokens;
    let mut audio = Vec::with_capacity(bundles.len() * frames * width);
    let mut tokens = Vec::with_capacity(bundles.len() * max_tokens * table.dim());
    for b in &bundles {
        if b.audio.shape() != [frames, width] || b.max_tokens != max_tokens {
            return Err(Error::record(&b.id, "bundle shape differs from the rest of the batch"));
        }
        audio.extend_from_slice(b.audio.data());
        tokens.extend_from_slice(b.token_embeddings(table).data());
    }
    let xvectors = bundles
        .iter()
        .map(|b| b.xvector.clone())
        .collect::<Option<Vec<_>>>();
    let n = bundles.len();
    Ok(Batch {
        audio: Tensor::new(vec![n, frames, width], audio)?,
        audio_lens: bundles.iter().map(|b| b.audio_len).collect(),
        tokens: Tensor::new(vec![n, max_tokens, table.dim()], tokens)?,
        text_lens: bundles.iter().map(FeatureBundle::text_len).collect(),
        xvectors,
        labels: bundles.iter().map(|b| b.label).collect(),
        bundles,
    })
}

/// Extracts and stacks the records at `indices`.
pub fn build_batch(
    records: &[ManifestRecord],
    extractor: &Extractor,
    table: &EmbeddingTable,
    indices: &[usize],
) -> Result<Batch> {
    let bundles = indices
        .iter()
        .map(|&i| {
            let r = records
                .get(i)
                .ok_or_else(|| Error::invalid("build_batch", format!("index {i} out of range")))?;
            extractor.extract(r)
        })
        .collect::<Result<Vec<_>>>()?;
    stack_bundles(bundles, table)
}

/// Directory containing `path`, for resolving manifest-relative paths.
pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

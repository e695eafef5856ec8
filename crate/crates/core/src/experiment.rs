//! Cross-validated training runs driven by a [`RunConfig`].

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_manifest, manifest_dir, Extractor, FeatureBundle, FrontendConfig, ManifestRecord, TranscriptSource};
use crate::dsp::read_features_file;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, make_folds, CvReport, FoldPlan, FoldResult, N_FOLDS};
use crate::model::{init_parameters, Checkpoint, ModelConfig, ModelParameters};
use crate::text::{load_embeddings_with_dim, EmbeddingTable, Vocabulary};
use crate::training::{fit, TrainConfig};

/// Input files of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Pretrained word vectors (`token v_1 … v_dim` per line). Without it the
    /// table is random.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    /// `EMF1` cache produced by `extract-features`; used instead of reading
    /// the WAV files.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
}

fn one() -> usize {
    1
}

/// Fully resolved settings of a run. `seed` has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Independent trainings per fold, averaged in the report.
    #[serde(default = "one")]
    pub repeats: usize,
    /// Folds to run; all ten when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<Vec<usize>>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub frontend: FrontendConfig,
}

impl RunConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            repeats: 1,
            folds: None,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            frontend: FrontendConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config { detail, .. } => Error::config(path.display().to_string(), detail),
            other => other,
        })?;
        let base = manifest_dir(path);
        for p in [&mut cfg.data.manifest, &mut cfg.data.embeddings, &mut cfg.data.features]
            .into_iter()
            .flatten()
        {
            *p = crate::data::resolve_path(&base, p);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.frontend.validate()?;
        if self.repeats == 0 {
            return Err(Error::config("repeats", "must be >= 1"));
        }
        if let Some(folds) = &self.folds {
            if let Some(f) = folds.iter().find(|&&f| f >= N_FOLDS) {
                return Err(Error::config("folds", format!("fold {f} out of range 0..{N_FOLDS}")));
            }
        }
        Ok(())
    }

    pub fn fold_list(&self) -> Vec<usize> {
        self.folds.clone().unwrap_or_else(|| (0..N_FOLDS).collect())
    }
}

/// Seed for one purpose of one fold/repeat, mixed so nearby inputs give
/// unrelated streams.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut z = seed;
    for &p in parts {
        z = z.wrapping_add(p.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

const SEED_PARAMS: u64 = 1;
const SEED_TRAIN: u64 = 2;
const SEED_EMBEDDING: u64 = 3;

pub fn transcript_of(record: &ManifestRecord, source: TranscriptSource) -> &str {
    match source {
        TranscriptSource::Reference => &record.transcript,
        TranscriptSource::Asr => record.asr_transcript.as_deref().unwrap_or(&record.transcript),
    }
}

/// Manifest, vocabulary, embedding table and extracted features.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<ManifestRecord>,
    pub vocab: Vocabulary,
    pub embedding: EmbeddingTable,
    pub bundles: Vec<FeatureBundle>,
}

impl Dataset {
    pub fn labels(&self) -> Vec<usize> {
        self.bundles.iter().map(|b| b.label).collect()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<FeatureBundle> {
        indices.iter().map(|&i| self.bundles[i].clone()).collect()
    }
}

/// Loads the manifest and extracts every record. The vocabulary covers all
/// transcripts of the manifest.
pub fn prepare_dataset(cfg: &RunConfig, manifest: &Path) -> Result<Dataset> {
    cfg.validate()?;
    let records = load_manifest(manifest)?;
    if records.is_empty() {
        return Err(Error::invalid("prepare_dataset", "manifest has no records"));
    }
    let vocab = Vocabulary::from_texts(records.iter().map(|r| transcript_of(r, cfg.frontend.transcript)));
    let emb_seed = derive_seed(cfg.seed, &[SEED_EMBEDDING]);
    let embedding = match &cfg.data.embeddings {
        Some(p) => load_embeddings_with_dim(p, &vocab, cfg.model.embedding_dim, emb_seed)?,
        None => EmbeddingTable::random(vocab.len(), cfg.model.embedding_dim, emb_seed),
    };
    let extractor = Extractor::new(
        cfg.frontend.clone(),
        vocab.clone(),
        cfg.model.use_xvector.then_some(cfg.model.xvector_dim),
        manifest_dir(manifest),
    )?;
    let bundles = match &cfg.data.features {
        Some(cache) => {
            let mut by_id: HashMap<String, _> = read_features_file(cache)?.into_iter().collect();
            records
                .iter()
                .map(|r| {
                    let m = by_id.remove(&r.id).ok_or_else(|| {
                        Error::record(&r.id, format!("not found in feature cache {}", cache.display()))
                    })?;
                    extractor.bundle_from_features(r, &m)
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => extractor.extract_all(&records)?,
    };
    Ok(Dataset {
        records,
        vocab,
        embedding,
        bundles,
    })
}

/// Trained model of one fold together with its test result.
#[derive(Debug, Clone)]
pub struct FoldRun {
    pub result: FoldResult,
    pub params: ModelParameters,
    pub train_losses: Vec<f64>,
}

/// Trains fold `fold` (repeat `repeat`) with early stopping on its dev
/// block and evaluates on its test block. The returned parameters are
/// rounded to `f32`, the precision checkpoints store, before testing. With
/// `out_dir`, writes `train.log` and `model.emc` there.
pub fn run_fold(
    cfg: &RunConfig,
    data: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    repeat: usize,
    out_dir: Option<&Path>,
) -> Result<FoldRun> {
    let split = plan.fold(fold)?;
    let tags = [fold as u64, repeat as u64];
    let params = init_parameters(
        &cfg.model,
        data.embedding.clone(),
        derive_seed(cfg.seed, &[SEED_PARAMS, tags[0], tags[1]]),
    )?;
    let tcfg = TrainConfig {
        seed: derive_seed(cfg.seed, &[SEED_TRAIN, tags[0], tags[1]]),
        ..cfg.train.clone()
    };
    let train = data.select(&split.train);
    let dev = data.select(&split.dev);
    let test = data.select(&split.test);

    let mut log_file = match out_dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            let p = d.join("train.log");
            Some(BufWriter::new(File::create(&p).map_err(|e| Error::io(p, e))?))
        }
        None => None,
    };
    let outcome = fit(
        &cfg.model,
        params,
        &train,
        Some(&dev),
        &tcfg,
        log_file.as_mut().map(|w| w as &mut dyn std::io::Write),
    )?;
    drop(log_file);

    let mut params = outcome.params;
    params.round_to_f32();
    let (confusion, metrics) = evaluate(&cfg.model, &params, &test)?;
    if let Some(d) = out_dir {
        Checkpoint {
            model: cfg.model.clone(),
            frontend: cfg.frontend.clone(),
            vocab: data.vocab.clone(),
            params: params.clone(),
        }
        .save(d.join("model.emc"))?;
    }
    log::info!(
        "fold {fold} repeat {repeat}: test WA {:.4} UA {:.4} (best epoch {})",
        metrics.wa,
        metrics.ua,
        outcome.best_epoch
    );
    Ok(FoldRun {
        result: FoldResult {
            fold,
            repeat,
            best_epoch: outcome.best_epoch,
            confusion,
            metrics,
        },
        params,
        train_losses: outcome.history.iter().map(|r| r.train_loss).collect(),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Full cross-validation: writes `config.toml`, `folds.json`, one
/// `fold{i}_r{k}/` directory per training, `report.txt` and `metrics.json`
/// under `run_dir`.
pub fn run_experiment(cfg: &RunConfig, run_dir: &Path) -> Result<CvReport> {
    cfg.validate()?;
    let manifest = cfg
        .data
        .manifest
        .clone()
        .ok_or_else(|| Error::config("data.manifest", "no manifest given"))?;
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    write_file(&run_dir.join("config.toml"), &cfg.to_toml())?;

    let data = prepare_dataset(cfg, &manifest)?;
    let plan = make_folds(&data.labels(), cfg.model.n_classes, cfg.seed)?;
    write_file(
        &run_dir.join("folds.json"),
        &serde_json::to_string_pretty(&plan).expect("plan serializes"),
    )?;

    let mut results = Vec::new();
    for repeat in 0..cfg.repeats {
        for fold in cfg.fold_list() {
            let dir = run_dir.join(format!("fold{fold}_r{repeat}"));
            results.push(run_fold(cfg, &data, &plan, fold, repeat, Some(&dir))?.result);
        }
    }
    let report = CvReport::new(results)?;
    write_file(&run_dir.join("report.txt"), &report.to_text())?;
    write_file(&run_dir.join("metrics.json"), &report.to_json())?;
    Ok(report)
}

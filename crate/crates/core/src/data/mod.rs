//! Manifest ingestion, feature bundles and batching, plus the synthetic
//! corpus used for desk-scale verification.

mod bundle;
mod manifest;
pub mod synth;

pub use bundle::{
    build_batch, manifest_dir, stack_bundles, Batch, Extractor, FeatureBundle, FrontendConfig,
    TranscriptSource,
};
pub use manifest::{load_manifest, load_xvector, resolve_path, write_manifest, Emotion, ManifestRecord};
pub use synth::{synth_dataset, SynthCorpus, SynthOptions};

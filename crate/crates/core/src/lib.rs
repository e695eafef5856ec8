//! Bimodal speech emotion recognition: multi-scale CNNs over MFCC frames and
//! word embeddings, statistical pooling, audio-guided attention over the
//! transcript, and a fused softmax classifier over four emotions.
//!
//! Everything runs on a small reverse-mode autodiff engine ([`autodiff`]) in
//! `f64`. The usual flow:
//!
//! ```no_run
//! use mscnn_spu::experiment::{run_experiment, RunConfig};
//!
//! let mut cfg = RunConfig::new(7);
//! cfg.data.manifest = Some("corpus/manifest.jsonl".into());
//! let report = run_experiment(&cfg, "runs/demo".as_ref())?;
//! println!("{}", report.to_text());
//! # Ok::<(), mscnn_spu::Error>(())
//! ```

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod dsp;
mod error;
pub mod evaluation;
pub mod experiment;
pub mod gradcheck;
pub mod model;
pub mod text;
pub mod training;

pub use error::{Error, Result};

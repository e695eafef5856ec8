//! Ten-fold cross-validation on a synthetic corpus with a reduced model.
//! Run directory: per-fold checkpoints and logs, report.txt, metrics.json.
//!
//!     cargo run --release --example cross_validation -- [run_dir]

use mscnn_spu::data::{synth_dataset, SynthOptions};
use mscnn_spu::experiment::{run_experiment, RunConfig};

fn main() -> mscnn_spu::Result<()> {
    let run_dir = std::env::args().nth(1).unwrap_or_else(|| "runs/cv_demo".into());
    let corpus_dir = tempfile::tempdir().expect("temp dir");
    let mut opts = SynthOptions::new(20, 5);
    opts.xvector_dim = 32;
    let corpus = synth_dataset(corpus_dir.path(), &opts)?;

    let mut cfg = RunConfig::new(5);
    cfg.data.manifest = Some(corpus.manifest_path.clone());
    cfg.data.embeddings = Some(corpus.embeddings_path.clone());
    cfg.model.filters_per_scale = 8;
    cfg.model.xvector_dim = 32;
    cfg.model.fc_hidden = 32;
    cfg.frontend.max_audio_seconds = 1.0;
    cfg.frontend.max_tokens = 16;
    cfg.train.epochs = 6;
    cfg.train.patience = 3;
    cfg.train.batch_size = 16;

    let report = run_experiment(&cfg, run_dir.as_ref())?;
    print!("{}", report.to_text());
    println!("outputs in {run_dir}");
    Ok(())
}

//! The ablation surface: every variant trains on the same fold with the
//! same seeds and reports its test accuracy.

use mscnn_spu::autodiff::PoolMode;
use mscnn_spu::data::{synth_dataset, SynthOptions};
use mscnn_spu::evaluation::make_folds;
use mscnn_spu::experiment::{prepare_dataset, run_fold, RunConfig};

fn main() -> mscnn_spu::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut opts = SynthOptions::new(20, 8);
    opts.xvector_dim = 32;
    let corpus = synth_dataset(dir.path(), &opts)?;

    let mut base = RunConfig::new(8);
    base.data.embeddings = Some(corpus.embeddings_path.clone());
    base.model.filters_per_scale = 8;
    base.model.xvector_dim = 32;
    base.model.fc_hidden = 32;
    base.frontend.max_audio_seconds = 1.0;
    base.frontend.max_tokens = 16;
    base.train.epochs = 5;

    let variants: Vec<(&str, Box<dyn Fn(&mut RunConfig)>)> = vec![
        ("full", Box::new(|_| {})),
        ("no attention", Box::new(|c| c.model.use_attention = false)),
        ("no x-vector", Box::new(|c| c.model.use_xvector = false)),
        ("text max-pool only", Box::new(|c| c.model.pool_modes_text = vec![PoolMode::Max])),
        ("no SWEM", Box::new(|c| c.model.use_swem = false)),
        ("audio max-pool only", Box::new(|c| c.model.pool_modes_audio = vec![PoolMode::Max])),
    ];
    for (name, tweak) in variants {
        let mut cfg = base.clone();
        tweak(&mut cfg);
        let data = prepare_dataset(&cfg, &corpus.manifest_path)?;
        let plan = make_folds(&data.labels(), 4, cfg.seed)?;
        let run = run_fold(&cfg, &data, &plan, 0, 0, None)?;
        println!(
            "{name:<20} fusion dim {:>5}  test WA {:.3}  UA {:.3}",
            cfg.model.fusion_dim(),
            run.result.metrics.wa,
            run.result.metrics.ua
        );
    }
    Ok(())
}

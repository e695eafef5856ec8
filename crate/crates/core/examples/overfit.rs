//! Memorise a small synthetic corpus (8 utterances per class) with the
//! standard recipe and print the training accuracy per epoch.
//!
//!     cargo run --release --example overfit -- [epochs] [filters]

use std::time::Instant;

use mscnn_spu::data::{synth_dataset, SynthOptions};
use mscnn_spu::evaluation::evaluate;
use mscnn_spu::experiment::{prepare_dataset, RunConfig};
use mscnn_spu::model::init_parameters;
use mscnn_spu::training::{train_epoch, AdamState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mscnn_spu::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let epochs = args.first().copied().unwrap_or(300);
    let filters = args.get(1).copied().unwrap_or(16);

    let dir = tempfile::tempdir().expect("temp dir");
    let mut opts = SynthOptions::new(8, 1);
    opts.xvector_dim = 64;
    let corpus = synth_dataset(dir.path(), &opts)?;

    let mut cfg = RunConfig::new(1);
    cfg.model.filters_per_scale = filters;
    cfg.model.xvector_dim = 64;
    cfg.train.batch_size = 32;
    cfg.data.embeddings = Some(corpus.embeddings_path.clone());
    let data = prepare_dataset(&cfg, &corpus.manifest_path)?;

    let mut params = init_parameters(&cfg.model, data.embedding.clone(), 3)?;
    let mut state = AdamState::for_params(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let started = Instant::now();
    for epoch in 0..epochs {
        let stats = train_epoch(&cfg.model, &mut params, &mut state, &data.bundles, &cfg.train, &mut rng)?;
        let (_, m) = evaluate(&cfg.model, &params, &data.bundles)?;
        println!(
            "epoch {epoch:3}  loss {:.4}  train WA {:.3}  ({:.1} s)",
            stats.mean_loss,
            m.wa,
            started.elapsed().as_secs_f64()
        );
        if m.wa >= 0.95 {
            println!("reached 95% training accuracy after {} epochs", epoch + 1);
            break;
        }
    }
    Ok(())
}

//! Writes a synthetic four-class corpus and prints one record per class.
//!
//!     cargo run --example synth_corpus -- out_dir [n_per_class] [seed]

use mscnn_spu::data::synth::class_band;
use mscnn_spu::data::{synth_dataset, SynthOptions};

fn main() -> mscnn_spu::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "synth_corpus".into());
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(8);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let corpus = synth_dataset(&out, &SynthOptions::new(n, seed))?;
    println!("{} records under {}", corpus.records.len(), corpus.root.display());
    for r in corpus.records.iter().take(4) {
        let (lo, hi) = class_band(r.label);
        println!(
            "{:<12} {:<8} band {lo:>6.0}-{hi:<6.0} Hz  \"{}\"  (ASR: \"{}\")",
            r.id,
            r.label,
            r.transcript,
            r.asr_transcript.as_deref().unwrap_or("")
        );
    }
    Ok(())
}

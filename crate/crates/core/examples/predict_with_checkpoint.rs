//! Train one fold, save the checkpoint, reload it and classify a fresh
//! synthetic utterance of each class.

use mscnn_spu::data::synth::synth_waveform;
use mscnn_spu::data::{synth_dataset, Emotion, Extractor, ManifestRecord, SynthOptions};
use mscnn_spu::dsp::write_wav;
use mscnn_spu::evaluation::{argmax, make_folds};
use mscnn_spu::experiment::{prepare_dataset, run_fold, RunConfig};
use mscnn_spu::model::{predict_probs, Checkpoint};
use rand::SeedableRng;

fn main() -> mscnn_spu::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let corpus = synth_dataset(dir.path(), &SynthOptions::new(12, 3))?;

    let mut cfg = RunConfig::new(3);
    cfg.data.embeddings = Some(corpus.embeddings_path.clone());
    cfg.model.filters_per_scale = 8;
    cfg.model.use_xvector = false;
    cfg.frontend.max_audio_seconds = 1.0;
    cfg.frontend.max_tokens = 16;
    cfg.train.epochs = 30;
    cfg.train.batch_size = 8;
    let data = prepare_dataset(&cfg, &corpus.manifest_path)?;
    let plan = make_folds(&data.labels(), 4, cfg.seed)?;
    let ck_dir = dir.path().join("fold0");
    let run = run_fold(&cfg, &data, &plan, 0, 0, Some(&ck_dir))?;
    println!("fold 0 test WA {:.3}", run.result.metrics.wa);

    let ck = Checkpoint::load(ck_dir.join("model.emc"))?;
    let extractor = Extractor::new(ck.frontend.clone(), ck.vocab.clone(), None, dir.path())?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let transcripts = [
        "that is outrageous i am furious",
        "we laugh so much this is wonderful",
        "i miss you and i cry",
        "the meeting is on tuesday okay",
    ];
    for (e, text) in Emotion::ALL.into_iter().zip(transcripts) {
        let wav = format!("probe_{}.wav", e.name());
        write_wav(dir.path().join(&wav), &synth_waveform(e, 0.8, &mut rng))?;
        let record = ManifestRecord {
            id: wav.clone(),
            wav_path: wav.into(),
            transcript: text.into(),
            asr_transcript: None,
            label: e,
            xvector_path: None,
        };
        let bundle = extractor.extract(&record)?;
        let probs = predict_probs(&ck.model, &ck.params, &[bundle])?.remove(0);
        let formatted: Vec<String> = probs.iter().map(|p| format!("{p:.3}")).collect();
        println!(
            "true {:<8} predicted {:<8} posterior [{}]",
            e,
            Emotion::ALL[argmax(&probs)],
            formatted.join(", ")
        );
    }
    Ok(())
}

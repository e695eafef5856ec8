//! Deterministic bimodal toy corpus. Every class has its own frequency band
//! (audio cue) and its own keywords (text cue), so either modality alone
//! separates the classes.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{write_manifest, Emotion, ManifestRecord};
use crate::dsp::{write_wav, WaveformBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::text::EMBEDDING_DIM;

const KEYWORDS: [[&str; 6]; 4] = [
    ["furious", "hate", "yelling", "outrageous", "damn", "enough"],
    ["wonderful", "love", "great", "excited", "laugh", "yay"],
    ["miss", "lonely", "cry", "sorry", "lost", "tears"],
    ["okay", "meeting", "tuesday", "paper", "schedule", "fine"],
];

const FILLERS: [&str; 12] = [
    "i", "you", "the", "it", "was", "that", "really", "just", "so", "we", "know", "what",
];

const N_SPEAKERS: usize = 8;

/// Frequency band (Hz) of the tones that make up each class's audio.
pub fn class_band(e: Emotion) -> (f64, f64) {
    match e {
        Emotion::Angry => (1800.0, 2600.0),
        Emotion::Happy => (1000.0, 1500.0),
        Emotion::Sad => (200.0, 400.0),
        Emotion::Neutral => (500.0, 800.0),
    }
}

pub fn class_keywords(e: Emotion) -> &'static [&'static str] {
    &KEYWORDS[e.index()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub n_per_class: usize,
    pub seed: u64,
    pub xvector_dim: usize,
    pub embedding_dim: usize,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

impl SynthOptions {
    pub fn new(n_per_class: usize, seed: u64) -> Self {
        Self {
            n_per_class,
            seed,
            xvector_dim: 512,
            embedding_dim: EMBEDDING_DIM,
            min_seconds: 0.5,
            max_seconds: 1.0,
        }
    }
}

/// Files written by [`synth_dataset`].
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub root: PathBuf,
    pub manifest_path: PathBuf,
    pub embeddings_path: PathBuf,
    pub records: Vec<ManifestRecord>,
}

fn make_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(p: &Path, s: &str) -> Result<()> {
    std::fs::write(p, s).map_err(|e| Error::io(p, e))
}

fn vector_line(values: impl IntoIterator<Item = f64>) -> String {
    let mut s = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v:.6}").expect("write to string");
    }
    s
}

/// Sum of three random tones inside the class band plus uniform noise.
pub fn synth_waveform<R: Rng>(e: Emotion, seconds: f64, rng: &mut R) -> WaveformBuffer {
    let (lo, hi) = class_band(e);
    let tones: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(lo..hi),
                rng.gen_range(0.08..0.25),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let n = (seconds * SAMPLE_RATE as f64) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let tone: f64 = tones
                .iter()
                .map(|&(f, a, ph)| a * (2.0 * PI * f * t + ph).sin())
                .sum();
            tone + rng.gen_range(-0.02..0.02)
        })
        .collect();
    WaveformBuffer::new(samples, SAMPLE_RATE)
}

fn synth_transcript<R: Rng>(e: Emotion, rng: &mut R) -> String {
    let n_keys = rng.gen_range(2..=3);
    let mut words: Vec<&str> = class_keywords(e)
        .choose_multiple(rng, n_keys)
        .copied()
        .collect();
    let n_fill = rng.gen_range(2..=5);
    words.extend((0..n_fill).map(|_| *FILLERS.choose(rng).expect("non-empty")));
    words.shuffle(rng);
    let mut s = words.join(" ");
    if let Some(first) = s.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    s.push('.');
    s
}

/// Writes `n_per_class` utterances per emotion under `out_dir`: `wav/*.wav`,
/// `xvec/*.txt`, `manifest.jsonl` and an `embeddings.txt` covering every word
/// the generator uses. Output is byte-identical for a fixed seed.
pub fn synth_dataset(out_dir: impl AsRef<Path>, opts: &SynthOptions) -> Result<SynthCorpus> {
    if opts.n_per_class == 0 {
        return Err(Error::invalid("synth_dataset", "n_per_class must be >= 1"));
    }
    if !(opts.min_seconds > 0.0 && opts.min_seconds <= opts.max_seconds) {
        return Err(Error::invalid("synth_dataset", "need 0 < min_seconds <= max_seconds"));
    }
    let root = out_dir.as_ref().to_path_buf();
    make_dir(&root.join("wav"))?;
    make_dir(&root.join("xvec"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let speakers: Vec<Vec<f64>> = (0..N_SPEAKERS)
        .map(|_| (0..opts.xvector_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();

    let mut records = Vec::with_capacity(4 * opts.n_per_class);
    for i in 0..opts.n_per_class {
        for e in Emotion::ALL {
            let id = format!("{}_{i:04}", e.name());
            let seconds = if opts.max_seconds > opts.min_seconds {
                rng.gen_range(opts.min_seconds..opts.max_seconds)
            } else {
                opts.min_seconds
            };
            let wave = synth_waveform(e, seconds, &mut rng);
            let wav_rel = PathBuf::from("wav").join(format!("{id}.wav"));
            write_wav(root.join(&wav_rel), &wave)?;

            let speaker = &speakers[rng.gen_range(0..N_SPEAKERS)];
            let xv = speaker.iter().map(|v| v + rng.gen_range(-0.1..0.1));
            let xv_rel = PathBuf::from("xvec").join(format!("{id}.txt"));
            write_text(&root.join(&xv_rel), &(vector_line(xv) + "\n"))?;

            let transcript = synth_transcript(e, &mut rng);
            let mut asr: Vec<&str> = transcript.split(' ').collect();
            let slot = rng.gen_range(0..asr.len());
            let filler = *FILLERS.choose(&mut rng).expect("non-empty");
            if asr.len() > 2 {
                asr[slot] = filler;
            }
            let asr_transcript = asr.join(" ");

            records.push(ManifestRecord {
                id,
                wav_path: wav_rel,
                transcript,
                asr_transcript: Some(asr_transcript),
                label: e,
                xvector_path: Some(xv_rel),
            });
        }
    }

    let mut emb = String::new();
    for word in KEYWORDS.iter().flatten().chain(FILLERS.iter()) {
        let v = (0..opts.embedding_dim).map(|_| rng.gen_range(-0.5..0.5));
        writeln!(emb, "{word} {}", vector_line(v)).expect("write to string");
    }
    let embeddings_path = root.join("embeddings.txt");
    write_text(&embeddings_path, &emb)?;

    let manifest_path = root.join("manifest.jsonl");
    write_manifest(&manifest_path, &records)?;
    Ok(SynthCorpus {
        root,
        manifest_path,
        embeddings_path,
        records,
    })
}

//! Literal loop implementations used as oracles, plus small fixtures.

#![allow(dead_code)]

use std::path::Path;

use mscnn_spu::data::{synth_dataset, SynthCorpus, SynthOptions};
use mscnn_spu::experiment::RunConfig;
use rand::Rng;

pub const STD_EPS: f64 = 1e-5;

pub fn rand_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

pub fn rand_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn flat(m: &[Vec<f64>]) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

/// `y[i][f] = b[f] + Σ_t Σ_d k[f][t][d] · x[i − (t − ⌊s/2⌋)][d]`, zero
/// outside the sequence.
pub fn conv_oracle(x: &[Vec<f64>], k: &[Vec<Vec<f64>>], b: &[f64]) -> Vec<Vec<f64>> {
    let len = x.len() as isize;
    let mut y = vec![vec![0.0; k.len()]; x.len()];
    for i in 0..len {
        for (f, kf) in k.iter().enumerate() {
            let s = kf.len() as isize;
            let mut acc = b[f];
            for t in 0..s {
                let m = t - s / 2;
                let src = i - m;
                if src < 0 || src >= len {
                    continue;
                }
                for (d, kv) in kf[t as usize].iter().enumerate() {
                    acc += kv * x[src as usize][d];
                }
            }
            y[i as usize][f] = acc;
        }
    }
    y
}

pub fn pool_max_oracle(x: &[Vec<f64>], valid: usize) -> Vec<f64> {
    let ch = x[0].len();
    let mut out = vec![f64::NEG_INFINITY; ch];
    for row in &x[..valid] {
        for c in 0..ch {
            if row[c] > out[c] {
                out[c] = row[c];
            }
        }
    }
    out
}

pub fn pool_avg_oracle(x: &[Vec<f64>], valid: usize) -> Vec<f64> {
    let ch = x[0].len();
    let mut out = vec![0.0; ch];
    for row in &x[..valid] {
        for c in 0..ch {
            out[c] += row[c];
        }
    }
    out.iter().map(|s| s / valid as f64).collect()
}

pub fn pool_std_oracle(x: &[Vec<f64>], valid: usize) -> Vec<f64> {
    let mean = pool_avg_oracle(x, valid);
    let ch = x[0].len();
    let mut var = vec![0.0; ch];
    for row in &x[..valid] {
        for c in 0..ch {
            var[c] += (row[c] - mean[c]) * (row[c] - mean[c]);
        }
    }
    var.iter().map(|v| (v / valid as f64 + STD_EPS).sqrt()).collect()
}

/// Concatenation of max, avg and std pools (in that order) for the modes
/// selected by `use_mode`.
pub fn spu_oracle(x: &[Vec<f64>], valid: usize, use_mode: [bool; 3]) -> Vec<f64> {
    let mut out = Vec::new();
    if use_mode[0] {
        out.extend(pool_max_oracle(x, valid));
    }
    if use_mode[1] {
        out.extend(pool_avg_oracle(x, valid));
    }
    if use_mode[2] {
        out.extend(pool_std_oracle(x, valid));
    }
    out
}

/// Weights `exp(e·h_k) / Σ exp(e·h_j)` over valid `k` (zero elsewhere) and
/// the attended vector `Σ_k w_k h_k`.
pub fn attention_oracle(h: &[Vec<f64>], e: &[f64], valid: usize) -> (Vec<f64>, Vec<f64>) {
    let scores: Vec<f64> = h[..valid]
        .iter()
        .map(|row| row.iter().zip(e).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let z: f64 = exps.iter().sum();
    let mut w = vec![0.0; h.len()];
    for k in 0..valid {
        w[k] = exps[k] / z;
    }
    let mut s = vec![0.0; e.len()];
    for k in 0..valid {
        for c in 0..e.len() {
            s[c] += w[k] * h[k][c];
        }
    }
    (w, s)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Naive `O(N²)` DFT power `|X_k|²` for `k = 0..=N/2`.
pub fn dft_power(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Corpus with small x-vectors so tests stay quick.
pub fn small_corpus(dir: &Path, n_per_class: usize, seed: u64) -> SynthCorpus {
    let mut opts = SynthOptions::new(n_per_class, seed);
    opts.xvector_dim = 32;
    synth_dataset(dir, &opts).expect("synthetic corpus")
}

/// Reduced model and front-end for training tests on one core: 8 filters
/// per scale, 1 s audio window, 16 tokens.
pub fn desk_config(seed: u64, corpus: &SynthCorpus) -> RunConfig {
    let mut cfg = RunConfig::new(seed);
    cfg.data.manifest = Some(corpus.manifest_path.clone());
    cfg.data.embeddings = Some(corpus.embeddings_path.clone());
    cfg.model.filters_per_scale = 8;
    cfg.model.xvector_dim = 32;
    cfg.model.fc_hidden = 32;
    cfg.frontend.max_audio_seconds = 1.0;
    cfg.frontend.max_tokens = 16;
    cfg
}

use mscnn_spu::autodiff::{Graph, PoolMode, Tensor};
use mscnn_spu::model::{attention_forward, spu_forward};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Largest deviation of `conv_full_width` from [`conv_oracle`] over `n`
/// random instances (odd and even kernel sizes, kernels longer than the
/// sequence included).
pub fn conv_instances(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (len, d, f, s) = (rng.gen_range(1..12), rng.gen_range(1..6), rng.gen_range(1..4), rng.gen_range(1..9));
        let x = rand_matrix(&mut rng, len, d);
        let k: Vec<Vec<Vec<f64>>> = (0..f).map(|_| rand_matrix(&mut rng, s, d)).collect();
        let b = rand_vec(&mut rng, f);
        let mut g = Graph::new();
        let xv = g.constant(Tensor::new(vec![len, d], flat(&x)).unwrap());
        let kv = g.constant(Tensor::new(vec![f, s, d], k.iter().flat_map(|m| flat(m)).collect()).unwrap());
        let bv = g.constant(Tensor::from_vec(b.clone()));
        let y = g.conv_full_width(xv, kv, bv).unwrap();
        worst = worst.max(max_abs_diff(g.value(y).data(), &flat(&conv_oracle(&x, &k, &b))));
    }
    worst
}

/// Largest deviation of `global_pool_time` (each mode) from the loop
/// oracles over `n` random instances with random valid lengths.
pub fn pool_instances(n: usize, seed: u64) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 3];
    for _ in 0..n {
        let (len, ch) = (rng.gen_range(1..25), rng.gen_range(1..10));
        let valid = rng.gen_range(1..=len);
        let mut x = rand_matrix(&mut rng, len, ch);
        for row in &mut x[valid..] {
            row.fill(0.0);
        }
        let mut g = Graph::new();
        let xv = g.constant(Tensor::new(vec![len, ch], flat(&x)).unwrap());
        let oracles = [
            pool_max_oracle(&x, valid),
            pool_avg_oracle(&x, valid),
            pool_std_oracle(&x, valid),
        ];
        for (i, mode) in PoolMode::ALL.into_iter().enumerate() {
            let y = g.global_pool_time(xv, mode, valid).unwrap();
            worst[i] = worst[i].max(max_abs_diff(g.value(y).data(), &oracles[i]));
        }
    }
    worst
}

/// Largest deviation of `spu_forward` from [`spu_oracle`] over `n` random
/// instances and random non-empty mode subsets.
pub fn spu_instances(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (len, ch) = (rng.gen_range(1..20), rng.gen_range(1..8));
        let valid = rng.gen_range(1..=len);
        let x = rand_matrix(&mut rng, len, ch);
        let mut use_mode = [rng.gen_bool(0.5), rng.gen_bool(0.5), rng.gen_bool(0.5)];
        if use_mode == [false; 3] {
            use_mode[rng.gen_range(0..3)] = true;
        }
        // modes handed over in scrambled order; output order must stay fixed
        let mut modes: Vec<PoolMode> = PoolMode::ALL
            .into_iter()
            .zip(use_mode)
            .filter_map(|(m, u)| u.then_some(m))
            .collect();
        modes.reverse();
        let mut g = Graph::new();
        let xv = g.constant(Tensor::new(vec![len, ch], flat(&x)).unwrap());
        let (joined, _) = spu_forward(&mut g, xv, &modes, valid).unwrap();
        worst = worst.max(max_abs_diff(g.value(joined).data(), &spu_oracle(&x, valid, use_mode)));
    }
    worst
}

/// Per-instance outcome of attention against the oracle.
pub struct AttentionCheck {
    pub max_value_diff: f64,
    pub max_sum_deviation: f64,
    pub max_padded_weight: f64,
    pub min_weight: f64,
}

/// `attention_forward` with three random contexts over `n` random text
/// maps and valid lengths.
pub fn attention_instances(n: usize, seed: u64) -> AttentionCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = AttentionCheck {
        max_value_diff: 0.0,
        max_sum_deviation: 0.0,
        max_padded_weight: 0.0,
        min_weight: f64::INFINITY,
    };
    for _ in 0..n {
        let (m, c) = (rng.gen_range(1..16), rng.gen_range(1..8));
        let valid = rng.gen_range(1..=m);
        let mut h = rand_matrix(&mut rng, m, c);
        for row in &mut h[valid..] {
            row.fill(0.0);
        }
        let contexts: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut rng, c).iter().map(|v| 3.0 * v).collect()).collect();
        let mut g = Graph::new();
        let hv = g.constant(Tensor::new(vec![m, c], flat(&h)).unwrap());
        let ev: Vec<_> = contexts.iter().map(|e| g.constant(Tensor::from_vec(e.clone()))).collect();
        let att = attention_forward(&mut g, hv, &ev, valid).unwrap();
        let mut expected = Vec::new();
        for (e, w) in contexts.iter().zip(&att.weights) {
            let (w_ref, s_ref) = attention_oracle(&h, e, valid);
            let w = g.value(*w).data();
            out.max_value_diff = out.max_value_diff.max(max_abs_diff(w, &w_ref));
            out.max_sum_deviation = out.max_sum_deviation.max((w.iter().sum::<f64>() - 1.0).abs());
            for &p in &w[valid..] {
                out.max_padded_weight = out.max_padded_weight.max(p.abs());
            }
            for &p in &w[..valid] {
                out.min_weight = out.min_weight.min(p);
            }
            expected.extend(s_ref);
        }
        out.max_value_diff = out.max_value_diff.max(max_abs_diff(g.value(att.vector).data(), &expected));
    }
    out
}

use mscnn_spu::data::{synth::synth_waveform, synth::class_band, Emotion};
use mscnn_spu::dsp::{MfccConfig, MfccExtractor, WaveformBuffer, SAMPLE_RATE};

pub fn sine(freq: f64, seconds: f64) -> WaveformBuffer {
    let n = (seconds * SAMPLE_RATE as f64) as usize;
    let samples = (0..n)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
        .collect();
    WaveformBuffer::new(samples, SAMPLE_RATE)
}

/// Mel energies of one frame computed from scratch: Hamming window written
/// out, naive DFT, filter edges from the natural-log form of the mel scale.
pub fn mel_frame_oracle(frame: &[f64], cfg: &MfccConfig) -> Vec<f64> {
    let n = frame.len();
    let mut padded = vec![0.0; cfg.fft_size];
    for (i, &s) in frame.iter().enumerate() {
        let w = 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
        padded[i] = s * w;
    }
    let power = dft_power(&padded);
    let mel = |f: f64| 1127.0 * (1.0 + f / 700.0).ln();
    let inv = |m: f64| 700.0 * ((m / 1127.0).exp() - 1.0);
    let (lo, hi) = (mel(cfg.fmin), mel(cfg.fmax));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| inv(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
    (0..cfg.n_mels)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            power
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let f = k as f64 * bin_hz;
                    let w = if f > l && f <= c {
                        (f - l) / (c - l)
                    } else if f > c && f < r {
                        (r - f) / (r - c)
                    } else {
                        0.0
                    };
                    w * p
                })
                .sum()
        })
        .collect()
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

pub struct MelCheck {
    pub argmax: usize,
    pub oracle_argmax: usize,
    pub centre_hz: f64,
    pub max_rel_diff: f64,
}

/// Middle frame of a 1 s tone at `freq`, library vs oracle.
pub fn mel_tone_check(freq: f64) -> MelCheck {
    let cfg = MfccConfig::default();
    let ex = MfccExtractor::new(cfg.clone()).unwrap();
    let wave = sine(freq, 1.0);
    let mel = ex.mel_energies(&wave).unwrap();
    let t = mel.len() / 2;
    let frame = &wave.samples[t * cfg.hop..t * cfg.hop + cfg.frame_len];
    let oracle = mel_frame_oracle(frame, &cfg);
    let peak = oracle.iter().cloned().fold(0.0, f64::max);
    let rel = max_abs_diff(&mel[t], &oracle) / peak;
    let a = argmax(&mel[t]);
    MelCheck {
        argmax: a,
        oracle_argmax: argmax(&oracle),
        centre_hz: ex.filterbank().centers_hz[a],
        max_rel_diff: rel,
    }
}

/// Fraction of synthetic utterances whose strongest DFT bin (first 512
/// samples, naive DFT) falls inside their class band.
pub fn class_band_fraction(n_per_class: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    for _ in 0..n_per_class {
        for e in Emotion::ALL {
            let w = synth_waveform(e, 0.5, &mut rng);
            let p = dft_power(&w.samples[..512]);
            let f = argmax(&p) as f64 * SAMPLE_RATE as f64 / 512.0;
            let (lo, hi) = class_band(e);
            // one bin of leakage either side
            if f >= lo - 31.25 && f <= hi + 31.25 {
                hits += 1;
            }
        }
    }
    hits as f64 / (4 * n_per_class) as f64
}

/// Nearest-centroid accuracy on time-averaged MFCC vectors: centroids from
/// `n_per_class` utterances, scored on a second independent draw.
pub fn mfcc_centroid_accuracy(n_per_class: usize, seed: u64) -> f64 {
    let ex = MfccExtractor::new(MfccConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean_vec = |e: Emotion| -> Vec<f64> {
        let w = synth_waveform(e, rng.gen_range(0.5..1.0), &mut rng);
        let m = ex.extract(&w).unwrap();
        let v = m.values();
        let (n, d) = (v.rows(), v.cols());
        (0..d).map(|c| (0..n).map(|t| v.data()[t * d + c]).sum::<f64>() / n as f64).collect()
    };
    let mut centroids = Vec::new();
    for e in Emotion::ALL {
        let vs: Vec<Vec<f64>> = (0..n_per_class).map(|_| mean_vec(e)).collect();
        let d = vs[0].len();
        centroids.push((0..d).map(|c| vs.iter().map(|v| v[c]).sum::<f64>() / vs.len() as f64).collect::<Vec<_>>());
    }
    let mut hits = 0;
    for _ in 0..n_per_class {
        for e in Emotion::ALL {
            let v = mean_vec(e);
            let dists: Vec<f64> = centroids
                .iter()
                .map(|c| -c.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .collect();
            if argmax(&dists) == e.index() {
                hits += 1;
            }
        }
    }
    hits as f64 / (4 * n_per_class) as f64
}

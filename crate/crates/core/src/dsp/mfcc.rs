use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::fft::power_spectrum;
use super::wav::{WaveformBuffer, SAMPLE_RATE};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Width of the stacked MFCC ‖ Δ ‖ ΔΔ feature.
pub const AUDIO_FEATURE_DIM: usize = 96;
/// Floor applied to mel energies before the log.
pub const LOG_MEL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub n_mfcc: usize,
    /// Analysis window length in samples (25 ms).
    pub frame_len: usize,
    /// Frame advance in samples (10 ms).
    pub hop: usize,
    pub fft_size: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Half-width of the delta regression window.
    pub delta_window: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            n_mfcc: 32,
            frame_len: 400,
            hop: 160,
            fft_size: 512,
            n_mels: 64,
            fmin: 0.0,
            fmax: 8000.0,
            delta_window: 2,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, detail: String| Err(Error::config(format!("mfcc.{field}"), detail));
        if self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return fail("n_mfcc", format!("must be in 1..={}, got {}", self.n_mels, self.n_mfcc));
        }
        if self.frame_len == 0 || self.fft_size < self.frame_len {
            return fail(
                "fft_size",
                format!("{} is smaller than frame_len {}", self.fft_size, self.frame_len),
            );
        }
        if !self.fft_size.is_power_of_two() {
            return fail("fft_size", format!("{} is not a power of two", self.fft_size));
        }
        if self.hop == 0 {
            return fail("hop", "must be positive".into());
        }
        if !(0.0 <= self.fmin && self.fmin < self.fmax && self.fmax <= self.sample_rate as f64 / 2.0) {
            return fail("fmax", format!("band {}..{} Hz is invalid", self.fmin, self.fmax));
        }
        if self.delta_window == 0 {
            return fail("delta_window", "must be >= 1".into());
        }
        Ok(())
    }

    /// `1 + ⌊(samples − frame_len) / hop⌋`, or 0 when shorter than one frame.
    pub fn frame_count(&self, samples: usize) -> usize {
        if samples < self.frame_len {
            0
        } else {
            1 + (samples - self.frame_len) / self.hop
        }
    }

    /// Number of frames a clip of `seconds` produces.
    pub fn frames_for_seconds(&self, seconds: f64) -> usize {
        self.frame_count((seconds * self.sample_rate as f64).round() as usize)
    }

    /// Width of the stacked feature: three blocks of `n_mfcc`.
    pub fn feature_dim(&self) -> usize {
        3 * self.n_mfcc
    }
}

pub fn mel_from_hz(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn hz_from_mel(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Symmetric Hamming window `0.54 − 0.46·cos(2πn/(N−1))`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Triangular filters spaced evenly on the mel scale, evaluated at the
/// centre frequency of each FFT bin.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_mels × (fft_size/2 + 1)` weights.
    pub weights: Vec<Vec<f64>>,
    /// Peak frequency of each filter in Hz.
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &MfccConfig) -> Self {
        let lo = mel_from_hz(cfg.fmin);
        let hi = mel_from_hz(cfg.fmax);
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| hz_from_mel(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let n_bins = cfg.fft_size / 2 + 1;
        let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
        let weights = edges
            .windows(3)
            .map(|e| {
                let (left, center, right) = (e[0], e[1], e[2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        let rise = (f - left) / (center - left);
                        let fall = (right - f) / (right - center);
                        rise.min(fall).max(0.0)
                    })
                    .collect()
            })
            .collect();
        Self {
            weights,
            centers_hz: edges[1..=cfg.n_mels].to_vec(),
        }
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(power).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// First `n_out` rows of the orthonormal DCT-II matrix of size `n_in`.
pub fn dct2_matrix(n_in: usize, n_out: usize) -> Vec<Vec<f64>> {
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n_in as f64).sqrt()
            } else {
                (2.0 / n_in as f64).sqrt()
            };
            (0..n_in)
                .map(|n| scale * (PI * k as f64 * (2 * n + 1) as f64 / (2 * n_in) as f64).cos())
                .collect()
        })
        .collect()
}

/// Reusable MFCC pipeline holding the precomputed window, filterbank and DCT.
#[derive(Debug, Clone)]
pub struct MfccExtractor {
    cfg: MfccConfig,
    window: Vec<f64>,
    filterbank: MelFilterbank,
    dct: Vec<Vec<f64>>,
}

impl MfccExtractor {
    pub fn new(cfg: MfccConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            window: hamming(cfg.frame_len),
            filterbank: MelFilterbank::new(&cfg),
            dct: dct2_matrix(cfg.n_mels, cfg.n_mfcc),
            cfg,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Mel filterbank energies of every frame, `N × n_mels`.
    pub fn mel_energies(&self, wave: &WaveformBuffer) -> Result<Vec<Vec<f64>>> {
        if wave.sample_rate != self.cfg.sample_rate {
            return Err(Error::Wav {
                field: "sample_rate",
                detail: format!("{} Hz, expected {} Hz", wave.sample_rate, self.cfg.sample_rate),
            });
        }
        let n_frames = self.cfg.frame_count(wave.len());
        if n_frames == 0 {
            return Err(Error::invalid(
                "compute_mfcc",
                format!(
                    "signal of {} samples is shorter than one {}-sample frame",
                    wave.len(),
                    self.cfg.frame_len
                ),
            ));
        }
        let mut frame = vec![0.0; self.cfg.frame_len];
        (0..n_frames)
            .map(|t| {
                let start = t * self.cfg.hop;
                let src = &wave.samples[start..start + self.cfg.frame_len];
                for ((f, &s), &w) in frame.iter_mut().zip(src).zip(&self.window) {
                    *f = s * w;
                }
                let power = power_spectrum(&frame, self.cfg.fft_size)?;
                Ok(self.filterbank.apply(&power))
            })
            .collect()
    }

    /// Cepstral coefficients `N × n_mfcc` (coefficient 0 included).
    pub fn compute_mfcc(&self, wave: &WaveformBuffer) -> Result<Tensor> {
        let energies = self.mel_energies(wave)?;
        let n_frames = energies.len();
        let mut out = Vec::with_capacity(n_frames * self.cfg.n_mfcc);
        for e in energies {
            let log_mel: Vec<f64> = e.iter().map(|&v| v.max(LOG_MEL_FLOOR).ln()).collect();
            out.extend(
                self.dct
                    .iter()
                    .map(|row| row.iter().zip(&log_mel).map(|(a, b)| a * b).sum::<f64>()),
            );
        }
        Tensor::new(vec![n_frames, self.cfg.n_mfcc], out)
    }

    /// MFCC with first- and second-order deltas stacked along the feature axis.
    pub fn extract(&self, wave: &WaveformBuffer) -> Result<MfccMatrix> {
        let c = self.compute_mfcc(wave)?;
        let d1 = delta(&c, self.cfg.delta_window)?;
        let d2 = delta(&d1, self.cfg.delta_window)?;
        let (n, k) = (c.rows(), c.cols());
        let mut values = Vec::with_capacity(n * 3 * k);
        for t in 0..n {
            values.extend_from_slice(c.row(t));
            values.extend_from_slice(d1.row(t));
            values.extend_from_slice(d2.row(t));
        }
        MfccMatrix::new(Tensor::new(vec![n, 3 * k], values)?)
    }
}

/// Convenience wrapper around [`MfccExtractor::compute_mfcc`].
pub fn compute_mfcc(wave: &WaveformBuffer, cfg: &MfccConfig) -> Result<Tensor> {
    MfccExtractor::new(cfg.clone())?.compute_mfcc(wave)
}

/// Regression deltas `d_t = Σ_{n=1..W} n·(c_{t+n} − c_{t−n}) / (2·Σ n²)`
/// with edge frames replicated past either end.
pub fn delta(c: &Tensor, window: usize) -> Result<Tensor> {
    if window < 1 {
        return Err(Error::invalid("delta", "window must be >= 1"));
    }
    if c.ndim() != 2 || c.rows() == 0 {
        return Err(Error::shape("delta", format!("expected N×K with N >= 1, got {:?}", c.shape())));
    }
    let (n, k) = (c.rows(), c.cols());
    let denom = 2.0 * (1..=window).map(|i| (i * i) as f64).sum::<f64>();
    let last = n as isize - 1;
    let at = |t: isize| c.row(t.clamp(0, last) as usize);
    let mut out = vec![0.0; n * k];
    for t in 0..n {
        let row = &mut out[t * k..(t + 1) * k];
        for w in 1..=window {
            let ahead = at(t as isize + w as isize);
            let behind = at(t as isize - w as isize);
            for j in 0..k {
                row[j] += w as f64 * (ahead[j] - behind[j]);
            }
        }
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    Tensor::new(vec![n, k], out)
}

/// `N × 96` stacked audio features of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix {
    values: Tensor,
}

impl MfccMatrix {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.ndim() != 2 || values.cols() != AUDIO_FEATURE_DIM {
            return Err(Error::shape(
                "MfccMatrix",
                format!("expected N×{AUDIO_FEATURE_DIM}, got {:?}", values.shape()),
            ));
        }
        if !values.all_finite() {
            return Err(Error::Numeric("non-finite MFCC value".into()));
        }
        Ok(Self { values })
    }

    pub fn n_frames(&self) -> usize {
        self.values.rows()
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_tensor(self) -> Tensor {
        self.values
    }
}

/// Zero-pads or truncates to exactly `max_frames` rows. Returns the number of
/// real frames kept.
pub fn pad_or_truncate_audio(m: &MfccMatrix, max_frames: usize) -> (MfccMatrix, usize) {
    let dim = m.values.cols();
    let valid = m.n_frames().min(max_frames);
    let mut data = vec![0.0; max_frames * dim];
    data[..valid * dim].copy_from_slice(&m.values.data()[..valid * dim]);
    let values = Tensor::new(vec![max_frames, dim], data).expect("consistent shape");
    (MfccMatrix { values }, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, seconds: f64, amp: f64) -> WaveformBuffer {
        let n = (seconds * SAMPLE_RATE as f64) as usize;
        let samples = (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
            .collect();
        WaveformBuffer::new(samples, SAMPLE_RATE)
    }

    #[test]
    fn frame_count_for_one_second() {
        let cfg = MfccConfig::default();
        assert_eq!(cfg.frame_count(16_000), 98);
        assert_eq!(cfg.frames_for_seconds(7.5), 748);
        let m = compute_mfcc(&sine(440.0, 1.0, 0.5), &cfg).unwrap();
        assert_eq!(m.shape(), &[98, 32]);
    }

    #[test]
    fn zero_signal_gives_constant_cepstrum() {
        let cfg = MfccConfig::default();
        let m = compute_mfcc(&WaveformBuffer::new(vec![0.0; 4000], SAMPLE_RATE), &cfg).unwrap();
        let c0 = (cfg.n_mels as f64).sqrt() * LOG_MEL_FLOOR.ln();
        for t in 0..m.rows() {
            let row = m.row(t);
            assert!((row[0] - c0).abs() < 1e-9);
            assert!(row[1..].iter().all(|v| v.abs() < 1e-9));
            assert_eq!(row, m.row(0));
        }
    }

    #[test]
    fn short_signal_is_rejected() {
        let cfg = MfccConfig::default();
        assert!(compute_mfcc(&WaveformBuffer::new(vec![0.1; 399], SAMPLE_RATE), &cfg).is_err());
    }

    #[test]
    fn gain_changes_only_c0() {
        let cfg = MfccConfig::default();
        let ex = MfccExtractor::new(cfg).unwrap();
        let a = ex.compute_mfcc(&sine(700.0, 0.3, 0.1)).unwrap();
        let b = ex.compute_mfcc(&sine(700.0, 0.3, 0.4)).unwrap();
        let shift = (64f64).sqrt() * (16f64).ln();
        for t in 0..a.rows() {
            assert!((b.row(t)[0] - a.row(t)[0] - shift).abs() < 1e-6);
            for j in 1..32 {
                assert!((b.row(t)[j] - a.row(t)[j]).abs() < 1e-6, "t={t} j={j}");
            }
        }
    }

    #[test]
    fn delta_edge_cases() {
        let c = Tensor::new(vec![6, 2], vec![3.0; 12]).unwrap();
        assert!(delta(&c, 2).unwrap().data().iter().all(|&v| v == 0.0));
        let ramp = Tensor::new(vec![10, 1], (0..10).map(f64::from).collect()).unwrap();
        let d = delta(&ramp, 2).unwrap();
        for t in 2..8 {
            assert!((d.data()[t] - 1.0).abs() < 1e-12);
        }
        assert!(delta(&ramp, 0).is_err());
    }

    #[test]
    fn delta_matches_literal_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, k, w) = (13usize, 5usize, 2usize);
        let vals: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let c = Tensor::new(vec![n, k], vals.clone()).unwrap();
        let d = delta(&c, w).unwrap();
        for t in 0..n {
            for j in 0..k {
                let mut num = 0.0;
                for s in 1..=w {
                    let up = (t + s).min(n - 1);
                    let down = t.saturating_sub(s);
                    num += s as f64 * (vals[up * k + j] - vals[down * k + j]);
                }
                let expect = num / (2.0 * (1.0 + 4.0));
                assert!((d.data()[t * k + j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn extract_stacks_96_columns() {
        let ex = MfccExtractor::new(MfccConfig::default()).unwrap();
        let m = ex.extract(&sine(300.0, 0.5, 0.3)).unwrap();
        assert_eq!(m.values().cols(), 96);
        assert_eq!(m.n_frames(), MfccConfig::default().frame_count(8000));
    }

    #[test]
    fn padding_and_truncation() {
        let make = |n: usize| {
            MfccMatrix::new(Tensor::new(vec![n, 96], vec![1.0; n * 96]).unwrap()).unwrap()
        };
        let (p, v) = pad_or_truncate_audio(&make(98), 748);
        assert_eq!((p.n_frames(), v), (748, 98));
        assert!(p.values().data()[98 * 96..].iter().all(|&x| x == 0.0));
        let (p, v) = pad_or_truncate_audio(&make(800), 748);
        assert_eq!((p.n_frames(), v), (748, 748));
        let exact = make(748);
        let (p, v) = pad_or_truncate_audio(&exact, 748);
        assert_eq!((p, v), (exact, 748));
    }

    #[test]
    fn config_validation() {
        let bad = MfccConfig {
            n_mfcc: 80,
            ..MfccConfig::default()
        };
        assert!(MfccExtractor::new(bad).is_err());
        let bad = MfccConfig {
            fft_size: 256,
            ..MfccConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

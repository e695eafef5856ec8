mod common;

use common::*;
use mscnn_spu::data::FrontendConfig;
use mscnn_spu::dsp::{
    dct2_matrix, delta, power_spectrum, read_features, write_features, MfccConfig, MfccExtractor, MfccMatrix,
    WaveformBuffer, SAMPLE_RATE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn frame_counts() {
    let cfg = MfccConfig::default();
    assert_eq!(cfg.frame_count(16_000), 98);
    assert_eq!(cfg.frame_count(400), 1);
    assert_eq!(cfg.frame_count(399), 0);
    assert_eq!(FrontendConfig::default().max_frames(), 748);
    let ex = MfccExtractor::new(cfg).unwrap();
    let m = ex.extract(&sine(440.0, 1.0)).unwrap();
    assert_eq!(m.values().shape(), &[98, 96]);
}

#[test]
fn tone_lands_in_expected_mel_filter() {
    for freq in [250.0, 1000.0, 3000.0] {
        let c = mel_tone_check(freq);
        assert_eq!(c.argmax, c.oracle_argmax, "{freq} Hz");
        assert!(c.max_rel_diff < 1e-9, "{freq} Hz: {}", c.max_rel_diff);
    }
    let c = mel_tone_check(1000.0);
    assert!((c.centre_hz - 1000.0).abs() < 60.0, "{}", c.centre_hz);
}

#[test]
fn power_spectrum_matches_naive_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let frame: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut padded = frame.clone();
    padded.resize(512, 0.0);
    let fast = power_spectrum(&frame, 512).unwrap();
    let slow = dft_power(&padded);
    assert!(max_abs_diff(&fast, &slow) < 1e-9);
}

#[test]
fn dct_is_orthonormal() {
    let d = dct2_matrix(64, 64);
    for i in 0..64 {
        for j in 0..64 {
            let dot: f64 = d[i].iter().zip(&d[j]).map(|(a, b)| a * b).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((dot - want).abs() < 1e-12);
        }
    }
}

#[test]
fn delta_of_linear_ramp_is_its_slope() {
    let n = 12;
    let c = mscnn_spu::autodiff::Tensor::new(vec![n, 1], (0..n).map(|t| 3.0 * t as f64).collect()).unwrap();
    let d = delta(&c, 2).unwrap();
    // interior frames see the full window; edges are clamped
    for t in 2..n - 2 {
        assert!((d.data()[t] - 3.0).abs() < 1e-12);
    }
}

#[test]
fn synthetic_classes_are_spectrally_separable() {
    assert!(class_band_fraction(10, 21) >= 0.95);
    assert!(mfcc_centroid_accuracy(10, 22) > 0.9);
}

#[test]
fn mfcc_rejects_bad_input() {
    let ex = MfccExtractor::new(MfccConfig::default()).unwrap();
    assert!(ex.extract(&WaveformBuffer::new(vec![0.0; 100], SAMPLE_RATE)).is_err());
    assert!(ex.extract(&WaveformBuffer::new(vec![0.0; 16_000], 8_000)).is_err());
    let bad = MfccConfig {
        fft_size: 500,
        ..MfccConfig::default()
    };
    assert!(MfccExtractor::new(bad).is_err());
}

#[test]
fn silence_stays_finite() {
    let ex = MfccExtractor::new(MfccConfig::default()).unwrap();
    let m = ex.extract(&WaveformBuffer::new(vec![0.0; 8_000], SAMPLE_RATE)).unwrap();
    assert!(m.values().data().iter().all(|v| v.is_finite()));
}

#[test]
fn feature_cache_round_trip() {
    let ex = MfccExtractor::new(MfccConfig::default()).unwrap();
    let m = ex.extract(&sine(700.0, 0.5)).unwrap();
    let mut buf = Vec::new();
    write_features(&mut buf, &[("a".into(), m.clone())]).unwrap();
    let back = read_features(&buf[..]).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!(back[0].0, "a");
    let expect: Vec<f64> = m.values().data().iter().map(|&v| v as f32 as f64).collect();
    assert_eq!(back[0].1.values().data(), &expect[..]);
    assert!(read_features(&buf[..buf.len() - 3]).is_err());
    assert!(read_features(&b"XXXX"[..]).is_err());
    let _: MfccMatrix = back.into_iter().next().unwrap().1;
}

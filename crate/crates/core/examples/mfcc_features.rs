//! MFCC ‖ Δ ‖ ΔΔ of a one-second 1 kHz tone, the mel filter it excites most,
//! and a round trip through the EMF1 feature cache.

use std::f64::consts::PI;

use mscnn_spu::dsp::{
    read_features, write_features, MfccConfig, MfccExtractor, WaveformBuffer, SAMPLE_RATE,
};

fn main() -> mscnn_spu::Result<()> {
    let samples = (0..SAMPLE_RATE)
        .map(|i| 0.5 * (2.0 * PI * 1000.0 * i as f64 / SAMPLE_RATE as f64).sin())
        .collect();
    let wave = WaveformBuffer::new(samples, SAMPLE_RATE);
    let ex = MfccExtractor::new(MfccConfig::default())?;

    let mel = ex.mel_energies(&wave)?;
    let frame = &mel[mel.len() / 2];
    let best = (0..frame.len()).max_by(|&a, &b| frame[a].total_cmp(&frame[b])).unwrap_or(0);
    println!(
        "strongest mel filter: {best} (centre {:.0} Hz)",
        ex.filterbank().centers_hz[best]
    );

    let feats = ex.extract(&wave)?;
    println!("features: {} frames x {} columns", feats.n_frames(), feats.values().cols());
    println!("first frame, c0..c4: {:?}", &feats.values().row(0)[..5]);

    let mut buf = Vec::new();
    write_features(&mut buf, &[("tone".to_string(), feats.clone())]).expect("in-memory write");
    let back = read_features(&buf[..])?;
    let max_diff = feats
        .values()
        .data()
        .iter()
        .zip(back[0].1.values().data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("EMF1 cache: {} bytes, largest change from f32 storage {max_diff:.2e}", buf.len());
    Ok(())
}

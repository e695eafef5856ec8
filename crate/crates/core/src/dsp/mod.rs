//! Audio front end: WAV ingestion, framing, radix-2 FFT, mel filterbank,
//! DCT-II cepstra and regression deltas, producing the `N × 96` MFCC ‖ Δ ‖ ΔΔ
//! sequence fed to the audio branch.

mod feature_file;
mod fft;
mod mfcc;
mod wav;

pub use feature_file::{
    read_features, read_features_file, write_features, write_features_file, FEATURE_MAGIC,
};
pub use fft::{fft_in_place, power_spectrum};
pub use mfcc::{
    compute_mfcc, dct2_matrix, delta, hamming, hz_from_mel, mel_from_hz, pad_or_truncate_audio,
    MelFilterbank, MfccConfig, MfccExtractor, MfccMatrix, AUDIO_FEATURE_DIM, LOG_MEL_FLOOR,
};
pub use wav::{load_wav, write_wav, WaveformBuffer, SAMPLE_RATE};

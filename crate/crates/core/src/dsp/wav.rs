use std::path::Path;

use crate::error::{Error, Result};

/// Sample rate every waveform is expected to have after ingestion.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio with samples scaled to `[-1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl WaveformBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a 16-bit PCM mono 16 kHz RIFF/WAVE file. Samples are `value / 32768`.
pub fn load_wav(path: impl AsRef<Path>) -> Result<WaveformBuffer> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::Wav {
            field: "container",
            detail: format!("{}: {other}", path.display()),
        },
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Wav {
            field: "codec",
            detail: format!("{}: floating-point samples, expected 16-bit PCM", path.display()),
        });
    }
    if spec.bits_per_sample != 16 {
        return Err(Error::Wav {
            field: "bits_per_sample",
            detail: format!("{}: {} bits, expected 16", path.display(), spec.bits_per_sample),
        });
    }
    if spec.channels != 1 {
        return Err(Error::Wav {
            field: "channels",
            detail: format!("{}: {} channels, expected mono", path.display(), spec.channels),
        });
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::Wav {
            field: "sample_rate",
            detail: format!("{}: {} Hz, expected {SAMPLE_RATE} Hz", path.display(), spec.sample_rate),
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Wav {
            field: "data",
            detail: format!("{}: {e}", path.display()),
        })?;
    Ok(WaveformBuffer::new(samples, spec.sample_rate))
}

/// Writes a waveform as 16-bit PCM mono. Samples are clamped to the PCM range.
pub fn write_wav(path: impl AsRef<Path>, wave: &WaveformBuffer) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::Wav {
            field: "container",
            detail: format!("{}: {other}", path.display()),
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in &wave.samples {
        writer.write_sample(quantize(s)).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

fn quantize(sample: f64) -> i16 {
    (sample * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_file_reads_as_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.wav");
        write_wav(&path, &WaveformBuffer::new(vec![0.0; 320], SAMPLE_RATE)).unwrap();
        let w = load_wav(&path).unwrap();
        assert_eq!(w.samples, vec![0.0; 320]);
        assert_eq!(w.sample_rate, SAMPLE_RATE);
    }

    #[test]
    fn full_scale_sample_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.wav");
        write_wav(&path, &WaveformBuffer::new(vec![32767.0 / 32768.0], SAMPLE_RATE)).unwrap();
        let w = load_wav(&path).unwrap();
        assert_eq!(w.samples, vec![32767.0 / 32768.0]);
        assert!((w.samples[0] - 0.99997).abs() < 1e-5);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.wav");
        let samples: Vec<f64> = (-200i32..200).map(|v| f64::from(v * 80) / 32768.0).collect();
        let wave = WaveformBuffer::new(samples, SAMPLE_RATE);
        write_wav(&path, &wave).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back, wave);
        let path2 = dir.path().join("rt2.wav");
        write_wav(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    fn write_with_spec(path: &Path, spec: hound::WavSpec) {
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for _ in 0..10 {
            match spec.sample_format {
                hound::SampleFormat::Int if spec.bits_per_sample == 16 => {
                    w.write_sample(0i16).unwrap()
                }
                hound::SampleFormat::Int => w.write_sample(0i32).unwrap(),
                hound::SampleFormat::Float => w.write_sample(0f32).unwrap(),
            }
        }
        w.finalize().unwrap();
    }

    #[test]
    fn rejections_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let base = hound::WavSpec {
            channels: 1,
            sample_rate: SAMPLE_RATE,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let cases = [
            (hound::WavSpec { channels: 2, ..base }, "channels"),
            (hound::WavSpec { sample_rate: 8000, ..base }, "sample_rate"),
            (hound::WavSpec { bits_per_sample: 24, ..base }, "bits_per_sample"),
            (
                hound::WavSpec {
                    bits_per_sample: 32,
                    sample_format: hound::SampleFormat::Float,
                    ..base
                },
                "codec",
            ),
        ];
        for (i, (spec, field)) in cases.into_iter().enumerate() {
            let path = dir.path().join(format!("bad{i}.wav"));
            write_with_spec(&path, spec);
            match load_wav(&path) {
                Err(Error::Wav { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected {field} rejection, got {other:?}"),
            }
        }
        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"not a riff file at all").unwrap();
        assert!(matches!(load_wav(&junk), Err(Error::Wav { field: "container", .. })));
    }
}

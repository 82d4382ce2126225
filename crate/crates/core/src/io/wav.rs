//! RIFF/WAVE PCM16 mono 16 kHz reader and writer.

use std::io::Cursor;
use std::path::Path;

use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn unsupported(field: &'static str, found: impl ToString, expected: impl ToString) -> Error {
    Error::UnsupportedWav {
        field,
        found: found.to_string(),
        expected: expected.to_string(),
    }
}

/// Reads a mono 16 kHz PCM16 WAV file; every other layout is rejected
/// with the name of the offending header field.
pub fn read_wav<T: Scalar>(path: &Path) -> Result<Waveform<T>> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(unsupported("sample_format", "IEEE float", "PCM integer"));
    }
    if spec.bits_per_sample != 16 {
        return Err(unsupported("bits_per_sample", spec.bits_per_sample, 16));
    }
    if spec.channels != 1 {
        return Err(unsupported("channels", spec.channels, 1));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(unsupported("sample_rate", spec.sample_rate, SAMPLE_RATE));
    }
    let scale = T::lit(1.0 / 32768.0);
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| T::lit(f64::from(v)) * scale))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Waveform::from_samples(samples)
}

/// Encodes to PCM16 with rounding and clipping to `[-1, 1)`.
pub fn encode_wav<T: Scalar>(w: &Waveform<T>) -> Result<Vec<u8>> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut buf, spec)?;
        for &s in w.samples() {
            let v = (s.to_f64_lossy() * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(v)?;
        }
        writer.finalize()?;
    }
    Ok(buf.into_inner())
}

pub fn write_wav<T: Scalar>(path: &Path, w: &Waveform<T>) -> Result<()> {
    super::write_atomic(path, &encode_wav(w)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_on_pcm_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f64> = (0..400).map(|i| (i as f64 - 200.0) / 32768.0 * 100.0).collect();
        let w = Waveform::from_samples(samples).unwrap();
        write_wav(&path, &w).unwrap();
        let back: Waveform<f64> = read_wav(&path).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn rejects_stereo_and_wrong_rate_naming_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            ("stereo.wav", 2u16, 16_000u32, "channels"),
            ("rate.wav", 1, 44_100, "sample_rate"),
        ];
        for (name, channels, rate, field) in cases {
            let path = dir.path().join(name);
            let spec = hound::WavSpec {
                channels,
                sample_rate: rate,
                bits_per_sample: 16,
                sample_format: hound::SampleFormat::Int,
            };
            let mut w = hound::WavWriter::create(&path, spec).unwrap();
            for _ in 0..(channels as usize * 10) {
                w.write_sample(0i16).unwrap();
            }
            w.finalize().unwrap();
            let err = read_wav::<f64>(&path).unwrap_err();
            assert!(err.to_string().contains(field), "{err}");
        }
    }

    #[test]
    fn rejects_24_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i32).unwrap();
        w.finalize().unwrap();
        let err = read_wav::<f32>(&path).unwrap_err();
        assert!(err.to_string().contains("bits_per_sample"));
    }
}

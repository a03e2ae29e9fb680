use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use super::Signal;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    Pcm16,
    Pcm24,
    Float32,
}

impl BitDepth {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "16" | "pcm16" => Some(BitDepth::Pcm16),
            "24" | "pcm24" => Some(BitDepth::Pcm24),
            "32" | "f32" | "float32" => Some(BitDepth::Float32),
            _ => None,
        }
    }
}

/// What the reader found in the file header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WavInfo {
    pub channels: u16,
    pub bits_per_sample: u16,
    pub float: bool,
    pub frames: usize,
    /// True when extra channels were discarded.
    pub downmixed: bool,
}

fn wav_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Signal> {
    read_wav_with_info(path).map(|(s, _)| s)
}

/// Reads a PCM (8/16/24/32-bit) or 32-bit float WAV file. Only the first
/// channel of a multichannel file is kept; a warning is logged.
pub fn read_wav_with_info(path: impl AsRef<Path>) -> Result<(Signal, WavInfo)> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let all: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_err(path, e))?
        }
        (fmt, bits) => {
            return Err(wav_err(
                path,
                format!("unsupported sample format {fmt:?} with {bits} bits"),
            ))
        }
    };
    let samples: Vec<f64> = all.iter().step_by(channels).copied().collect();
    if channels > 1 {
        log::warn!(
            "{}: {} channels found, keeping the first (left) channel only",
            path.display(),
            channels
        );
    }
    let info = WavInfo {
        channels: spec.channels,
        bits_per_sample: spec.bits_per_sample,
        float: spec.sample_format == SampleFormat::Float,
        frames: samples.len(),
        downmixed: channels > 1,
    };
    let signal = Signal::new(samples, spec.sample_rate).map_err(|e| wav_err(path, e))?;
    Ok((signal, info))
}

/// Writes a mono WAV file. Integer formats clip to [-1, 1).
pub fn write_wav(path: impl AsRef<Path>, signal: &Signal, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let (bits, format) = match depth {
        BitDepth::Pcm16 => (16, SampleFormat::Int),
        BitDepth::Pcm24 => (24, SampleFormat::Int),
        BitDepth::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    match depth {
        BitDepth::Float32 => {
            for &s in signal.samples() {
                writer
                    .write_sample(s as f32)
                    .map_err(|e| wav_err(path, e))?;
            }
        }
        BitDepth::Pcm16 | BitDepth::Pcm24 => {
            let scale = (1i64 << (bits - 1)) as f64;
            let (lo, hi) = (-scale, scale - 1.0);
            for &s in signal.samples() {
                let q = (s * scale).round().clamp(lo, hi) as i32;
                writer.write_sample(q).map_err(|e| wav_err(path, e))?;
            }
        }
    }
    writer.finalize().map_err(|e| wav_err(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(n: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // f32-representable values so the float round trip can be exact
        let s = (0..n).map(|_| rng.gen_range(-1.0f32..1.0) as f64).collect();
        Signal::new(s, 48000).unwrap()
    }

    #[test]
    fn float_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let s = random_signal(1000, 1);
        write_wav(&path, &s, BitDepth::Float32).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn pcm16_round_trip_within_one_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i16.wav");
        let mut s = random_signal(1000, 2).into_samples();
        s.push(1.0);
        s.push(-1.0);
        let s = Signal::new(s, 44100).unwrap();
        write_wav(&path, &s, BitDepth::Pcm16).unwrap();
        let (back, info) = read_wav_with_info(&path).unwrap();
        assert_eq!(info.bits_per_sample, 16);
        assert_eq!(back.sample_rate(), 44100);
        let err = back
            .samples()
            .iter()
            .zip(s.samples())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 2f64.powi(-15), "{err}");
    }

    #[test]
    fn pcm24_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i24.wav");
        let s = random_signal(500, 3);
        write_wav(&path, &s, BitDepth::Pcm24).unwrap();
        let back = read_wav(&path).unwrap();
        for (a, b) in back.samples().iter().zip(s.samples()) {
            assert!((a - b).abs() <= 2f64.powi(-23));
        }
    }

    #[test]
    fn stereo_keeps_left_channel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 48000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for i in 0..10 {
            w.write_sample(i as f32 * 0.1).unwrap();
            w.write_sample(-0.5f32).unwrap();
        }
        w.finalize().unwrap();
        let (s, info) = read_wav_with_info(&path).unwrap();
        assert!(info.downmixed);
        assert_eq!(info.channels, 2);
        assert_eq!(s.len(), 10);
        assert_eq!(s.samples()[3], 0.3f32 as f64);
    }

    #[test]
    fn corrupt_header_is_descriptive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"RIFF\x10\x00\x00\x00WAVEjunkjunk").unwrap();
        let err = read_wav(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.wav"), "{msg}");
        assert!(read_wav(dir.path().join("missing.wav")).is_err());
    }
}

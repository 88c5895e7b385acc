use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
    /// IEEE float, 64 bits per sample; used for lossless RIR storage.
    Float64,
}

const FORMAT_IEEE_FLOAT: u16 = 3;

struct RawWav {
    format_tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
    data: Vec<u8>,
}

/// Minimal RIFF walk; only used for the 64-bit float layout hound does not cover.
fn parse_riff(bytes: &[u8]) -> Option<RawWav> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return None;
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let mut pos = 12;
    let mut fmt = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(size)?;
        if end > bytes.len() {
            return None;
        }
        if id == b"fmt " && size >= 16 {
            fmt = Some((u16_at(body), u16_at(body + 2), u32_at(body + 4), u16_at(body + 14)));
        } else if id == b"data" {
            let (format_tag, channels, sample_rate, bits) = fmt?;
            return Some(RawWav { format_tag, channels, sample_rate, bits, data: bytes[body..end].to_vec() });
        }
        pos = end + (size & 1);
    }
    None
}

/// Reads a mono PCM16, float32 or float64 WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    if let Some(raw) = parse_riff(&bytes) {
        if raw.format_tag == FORMAT_IEEE_FLOAT && raw.bits == 64 {
            if raw.channels != 1 {
                return Err(Error::UnsupportedWav {
                    path: path.to_path_buf(),
                    reason: format!("{} channels, only mono is accepted", raw.channels),
                });
            }
            let samples = raw.data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            return Waveform::new(samples, raw.sample_rate);
        }
    }
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let unsupported = |reason: String| Error::UnsupportedWav { path: path.to_path_buf(), reason };
    if spec.channels != 1 {
        return Err(unsupported(format!("{} channels, only mono is accepted", spec.channels)));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        (fmt, bits) => return Err(unsupported(format!("{fmt:?} {bits}-bit"))),
    };
    Waveform::new(samples, spec.sample_rate)
}

fn write_float64(path: &Path, wave: &Waveform<f64>) -> Result<()> {
    let data_len = (wave.len() * 8) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_IEEE_FLOAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&wave.sample_rate.to_le_bytes());
    out.extend_from_slice(&(wave.sample_rate * 8).to_le_bytes());
    out.extend_from_slice(&8u16.to_le_bytes());
    out.extend_from_slice(&64u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in &wave.samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform<f64>, format: WavFormat) -> Result<()> {
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, SampleFormat::Int),
        WavFormat::Float32 => (32, SampleFormat::Float),
        WavFormat::Float64 => return write_float64(path.as_ref(), wave),
    };
    let spec = WavSpec { channels: 1, sample_rate: wave.sample_rate, bits_per_sample: bits, sample_format };
    let mut writer = WavWriter::create(path, spec)?;
    for &s in &wave.samples {
        match format {
            WavFormat::Pcm16 => {
                writer.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?
            }
            WavFormat::Float32 => writer.write_sample(s as f32)?,
            WavFormat::Float64 => unreachable!(),
        }
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_roundtrip_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let w = Waveform::new(vec![0.5, -0.25, 0.125, 0.0], 22050).unwrap();
        write_wav(&p, &w, WavFormat::Float32).unwrap();
        assert_eq!(read_wav(&p).unwrap(), w);
    }

    #[test]
    fn pcm16_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.wav");
        let w = Waveform::new(vec![0.3, -0.7, 0.999], 16000).unwrap();
        write_wav(&p, &w, WavFormat::Pcm16).unwrap();
        let r = read_wav(&p).unwrap();
        for (a, b) in r.samples.iter().zip(&w.samples) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
    }

    #[test]
    fn float64_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.wav");
        let w = Waveform::new(vec![0.1, -1.0 / 3.0, 1e-300, std::f64::consts::PI], 16000).unwrap();
        write_wav(&p, &w, WavFormat::Float64).unwrap();
        assert_eq!(read_wav(&p).unwrap(), w);
    }

    #[test]
    fn stereo_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = WavSpec { channels: 2, sample_rate: 16000, bits_per_sample: 16, sample_format: SampleFormat::Int };
        let mut wr = WavWriter::create(&p, spec).unwrap();
        wr.write_sample(0i16).unwrap();
        wr.write_sample(0i16).unwrap();
        wr.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::UnsupportedWav { .. })));
    }
}

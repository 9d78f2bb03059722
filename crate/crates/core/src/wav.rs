//! 16-bit PCM mono WAV input and output.

use std::path::Path;

use crate::error::{Error, Result};

fn wav_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

/// Reads a mono 16-bit PCM file as samples scaled to `[-1, 1)`.
pub fn read_mono_i16(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(wav_err(path, format!("expected mono, found {} channels", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(wav_err(
            path,
            format!("expected 16-bit PCM, found {} bits {:?}", spec.bits_per_sample, spec.sample_format),
        ));
    }
    let declared = reader.len() as usize;
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_err(path, e))?;
    if samples.len() != declared {
        return Err(wav_err(
            path,
            format!("truncated: header declares {declared} samples, found {}", samples.len()),
        ));
    }
    Ok((samples, spec.sample_rate))
}

/// Writes samples as mono 16-bit PCM, clipping to full scale.
pub fn write_mono_i16(path: &Path, samples: &[f64], rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))?;
    Ok(())
}

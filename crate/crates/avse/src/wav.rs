//! Mono 16 kHz WAV input and output.

use std::io::{BufWriter, Read};
use std::path::Path;

use avse_core::dsp::AudioSignal;
use avse_core::SAMPLE_RATE;

use crate::atomic::write_atomic;
use crate::error::{FormatError, Result};

/// Sample encoding used when writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    /// 32-bit IEEE float, lossless for engine output.
    #[default]
    Float32,
    /// 16-bit PCM, clipped to [-1, 1].
    Pcm16,
}

/// Reads a mono 16 kHz WAV with integer or float samples, scaled to [-1, 1].
pub fn read_wav(path: &Path) -> Result<AudioSignal> {
    read_wav_from(std::fs::File::open(path)?)
}

pub fn read_wav_from<R: Read>(reader: R) -> Result<AudioSignal> {
    let mut wav = hound::WavReader::new(reader)?;
    let spec = wav.spec();
    if spec.channels != 1 {
        return Err(FormatError::invalid(format!("expected mono audio, got {} channels", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(avse_core::Error::SampleRate(spec.sample_rate).into());
    }
    let samples: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => wav.samples::<f32>().collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            wav.samples::<i32>().map(|s| s.map(|v| v as f32 * scale)).collect::<Result<_, _>>()?
        }
    };
    Ok(AudioSignal::new(samples)?)
}

pub fn write_wav(path: &Path, signal: &AudioSignal, format: WavFormat) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Float32 => 32,
            WavFormat::Pcm16 => 16,
        },
        sample_format: match format {
            WavFormat::Float32 => hound::SampleFormat::Float,
            WavFormat::Pcm16 => hound::SampleFormat::Int,
        },
    };
    write_atomic(path, |file| {
        let mut w = hound::WavWriter::new(BufWriter::new(file), spec)?;
        for &s in signal.samples() {
            match format {
                WavFormat::Float32 => w.write_sample(s)?,
                WavFormat::Pcm16 => w.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?,
            }
        }
        w.finalize()?;
        Ok(())
    })
}

use std::path::Path;

use crate::error::{Error, Result};

use super::{AudioSignal, SAMPLE_RATE_HZ};

/// Writes a 16 kHz 16-bit mono WAV file. Samples are clamped to [-1, 1]
/// here and nowhere earlier, so in-pipeline mixing keeps exact levels.
pub fn write_wav(path: &Path, signal: &AudioSignal) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &signal.samples {
        let clamped = s.clamp(-1.0, 1.0);
        writer.write_sample((clamped * 32767.0).round() as i16)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Reads a mono 16-bit WAV at the fixed pipeline rate back into float
/// samples in [-1, 1].
pub fn read_wav(path: &Path) -> Result<AudioSignal> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE_HZ {
        return Err(Error::Parse {
            what: "wav sample rate (pipeline is 16 kHz)",
            input: format!("{} ({} Hz)", path.display(), spec.sample_rate),
        });
    }
    if spec.channels != 1 {
        return Err(Error::Parse {
            what: "wav channel count (pipeline is mono)",
            input: format!("{} ({} channels)", path.display(), spec.channels),
        });
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Parse {
            what: "wav sample format (pipeline is 16-bit int)",
            input: path.display().to_string(),
        });
    }
    let samples: std::result::Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    let samples = samples?;
    AudioSignal::new(samples.iter().map(|&s| s as f64 / 32767.0).collect())
}

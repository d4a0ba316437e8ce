use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};

use super::{read_wav, rms, AudioSignal, NOISE_RMS};

/// Number of independent streams summed into babble noise.
pub const BABBLE_STREAMS: usize = 8;

/// Long-term average speech spectrum, third-octave band levels in dB
/// (Byrne et al. 1994, combined across languages). Only the shape matters
/// here; the absolute level is removed by RMS normalization.
const LTASS_BANDS: [(f64, f64); 20] = [
    (100.0, 54.4),
    (125.0, 57.7),
    (160.0, 56.8),
    (200.0, 60.2),
    (250.0, 60.3),
    (315.0, 59.0),
    (400.0, 62.1),
    (500.0, 62.1),
    (630.0, 60.5),
    (800.0, 59.8),
    (1000.0, 59.0),
    (1250.0, 58.0),
    (1600.0, 56.1),
    (2000.0, 53.4),
    (2500.0, 53.3),
    (3150.0, 51.3),
    (4000.0, 51.1),
    (5000.0, 50.1),
    (6300.0, 50.3),
    (8000.0, 48.2),
];

/// Width of a third-octave band as a fraction of its center frequency.
const THIRD_OCTAVE_WIDTH: f64 = 0.2316;

/// Power spectral density of the shaping curve at frequency `f`, in dB per
/// Hz. Band levels are converted to densities by dividing out the band
/// width, then interpolated linearly against log-frequency and clamped at
/// the table ends. DC gets no energy.
pub(crate) fn target_psd_db(f: f64) -> f64 {
    debug_assert!(f > 0.0);
    let point = |&(fc, band_db): &(f64, f64)| {
        (fc.log10(), band_db - 10.0 * (THIRD_OCTAVE_WIDTH * fc).log10())
    };
    let (first_x, first_y) = point(&LTASS_BANDS[0]);
    let (last_x, last_y) = point(&LTASS_BANDS[LTASS_BANDS.len() - 1]);
    let x = f.log10();
    if x <= first_x {
        return first_y;
    }
    if x >= last_x {
        return last_y;
    }
    for pair in LTASS_BANDS.windows(2) {
        let (x0, y0) = point(&pair[0]);
        let (x1, y1) = point(&pair[1]);
        if x <= x1 {
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    last_y
}

/// How noise is obtained for mixing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NoiseKind {
    /// White noise spectrally shaped to the long-term speech curve.
    SpeechShaped,
    /// Sum of several independent speech-shaped streams.
    Babble,
    /// A recording on disk, looped or cropped to length.
    File(PathBuf),
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseKind::SpeechShaped => write!(f, "speech_shaped"),
            NoiseKind::Babble => write!(f, "babble"),
            NoiseKind::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "speech_shaped" => Ok(NoiseKind::SpeechShaped),
            "babble" => Ok(NoiseKind::Babble),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(NoiseKind::File(PathBuf::from(path))),
                _ => Err(Error::Parse {
                    what: "noise kind",
                    input: s.to_string(),
                }),
            },
        }
    }
}

/// Produces `duration` samples of noise at RMS 0.1, deterministically for a
/// given RNG state.
pub fn make_noise(kind: &NoiseKind, duration: usize, rng: &mut impl Rng) -> Result<AudioSignal> {
    if duration == 0 {
        return Err(Error::EmptySignal("requested noise duration"));
    }
    match kind {
        NoiseKind::SpeechShaped => speech_shaped_noise(duration, rng),
        NoiseKind::Babble => babble_noise(duration, rng),
        NoiseKind::File(path) => file_noise(path, duration),
    }
}

fn rescale_to(samples: &mut [f64], target_rms: f64) -> Result<()> {
    let r = rms(samples)?;
    if r == 0.0 {
        return Err(Error::ZeroRms);
    }
    let scale = target_rms / r;
    for s in samples.iter_mut() {
        *s *= scale;
    }
    Ok(())
}

fn speech_shaped_noise(duration: usize, rng: &mut impl Rng) -> Result<AudioSignal> {
    let n = duration;
    let mut spectrum: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(rng.gen_range(-1.0..1.0), 0.0))
        .collect();

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut spectrum);

    // Apply the shaping gains symmetrically so the inverse transform stays
    // real-valued.
    let fs = super::SAMPLE_RATE_HZ as f64;
    spectrum[0] = Complex::new(0.0, 0.0);
    for k in 1..=n / 2 {
        let f = k as f64 * fs / n as f64;
        let gain = 10f64.powf(target_psd_db(f) / 20.0);
        spectrum[k] *= gain;
        if k != n - k {
            spectrum[n - k] *= gain;
        }
    }

    planner.plan_fft_inverse(n).process(&mut spectrum);
    let mut samples: Vec<f64> = spectrum.iter().map(|c| c.re / n as f64).collect();
    rescale_to(&mut samples, NOISE_RMS)?;
    AudioSignal::new(samples)
}

fn babble_noise(duration: usize, rng: &mut impl Rng) -> Result<AudioSignal> {
    let mut sum = vec![0.0f64; duration];
    for _ in 0..BABBLE_STREAMS {
        let mut stream_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let stream = speech_shaped_noise(duration, &mut stream_rng)?;
        for (acc, s) in sum.iter_mut().zip(&stream.samples) {
            *acc += s;
        }
    }
    rescale_to(&mut sum, NOISE_RMS)?;
    AudioSignal::new(sum)
}

fn file_noise(path: &Path, duration: usize) -> Result<AudioSignal> {
    if !path.exists() {
        return Err(Error::MissingNoiseFile(path.to_path_buf()));
    }
    let source = read_wav(path)?;
    let mut samples = Vec::with_capacity(duration);
    while samples.len() < duration {
        let take = (duration - samples.len()).min(source.len());
        samples.extend_from_slice(&source.samples[..take]);
    }
    rescale_to(&mut samples, NOISE_RMS)?;
    AudioSignal::new(samples)
}

//! Audio conditioning: RMS normalization per speaking condition, exact-SNR
//! noise mixing, and the uniform SNR augmentation policy.

mod noise;
mod wav;

pub use noise::{make_noise, NoiseKind, BABBLE_STREAMS};
pub use wav::{read_wav, write_wav};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Condition;
use crate::error::{Error, Result};

/// Fixed pipeline sample rate.
pub const SAMPLE_RATE_HZ: u32 = 16_000;

/// RMS every normalized plain (and compensated-Lombard) utterance is scaled to.
pub const TARGET_RMS: f64 = 0.05;

/// RMS all generated noise is scaled to before SNR mixing.
pub const NOISE_RMS: f64 = 0.1;

/// Augmentation SNR grid in dB, low to high.
pub const SNR_GRID_DB: [i32; 8] = [-15, -12, -9, -6, -3, 0, 3, 6];

/// A mono waveform at the fixed pipeline rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioSignal {
    /// Wraps samples after checking they are non-empty and finite.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySignal("audio signal"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFiniteSample);
        }
        Ok(AudioSignal {
            samples,
            sample_rate_hz: SAMPLE_RATE_HZ,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Root mean square; the constructor guarantees non-empty input.
    pub fn rms(&self) -> f64 {
        rms(&self.samples).expect("AudioSignal is never empty")
    }
}

/// Root mean square of a sample slice.
pub fn rms(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySignal("rms input"));
    }
    let mean_sq = samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64;
    Ok(mean_sq.sqrt())
}

/// Corpus-average RMS of the two recording conditions, used to place Lombard
/// speech at its natural energy advantage over plain speech.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsStats {
    pub mean_rms_lombard: f64,
    pub mean_rms_plain: f64,
}

impl RmsStats {
    pub fn new(mean_rms_lombard: f64, mean_rms_plain: f64) -> Result<Self> {
        if !(mean_rms_lombard > 0.0 && mean_rms_lombard.is_finite())
            || !(mean_rms_plain > 0.0 && mean_rms_plain.is_finite())
        {
            return Err(Error::Config(format!(
                "RMS stats must be strictly positive, got L={mean_rms_lombard}, NL={mean_rms_plain}"
            )));
        }
        Ok(RmsStats {
            mean_rms_lombard,
            mean_rms_plain,
        })
    }

    /// Target RMS for a signal presented under `condition`: plain and
    /// compensated-Lombard speech sit at the fixed reference level, Lombard
    /// speech keeps its corpus-level energy ratio above it.
    pub fn target_rms(&self, condition: Condition) -> f64 {
        match condition {
            Condition::Nl | Condition::Cl => TARGET_RMS,
            Condition::L => TARGET_RMS * self.mean_rms_lombard / self.mean_rms_plain,
        }
    }
}

/// Scales a waveform so its RMS matches the level assigned to `condition`.
/// Only the amplitude changes; the waveform shape is preserved.
pub fn normalize_condition(
    signal: &AudioSignal,
    condition: Condition,
    stats: &RmsStats,
) -> Result<AudioSignal> {
    let r = signal.rms();
    if r == 0.0 {
        return Err(Error::ZeroRms);
    }
    let scale = stats.target_rms(condition) / r;
    let samples = signal.samples.iter().map(|s| s * scale).collect();
    AudioSignal::new(samples)
}

/// Test-time or augmentation-time noise condition: either the clean signal or
/// one SNR from the fixed grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SnrCondition {
    Clean,
    Noisy { level_db: i32 },
}

impl SnrCondition {
    /// Noisy condition at `level_db`, which must sit on the grid.
    pub fn noisy(level_db: i32) -> Result<Self> {
        if !SNR_GRID_DB.contains(&level_db) {
            return Err(Error::InvalidSnrLevel(level_db));
        }
        Ok(SnrCondition::Noisy { level_db })
    }

    pub fn level_db(&self) -> Option<i32> {
        match self {
            SnrCondition::Clean => None,
            SnrCondition::Noisy { level_db } => Some(*level_db),
        }
    }

    /// The full evaluation axis: every grid SNR plus clean, low to high.
    pub fn all() -> Vec<SnrCondition> {
        let mut out: Vec<SnrCondition> = SNR_GRID_DB
            .iter()
            .map(|&level_db| SnrCondition::Noisy { level_db })
            .collect();
        out.push(SnrCondition::Clean);
        out
    }
}

impl std::fmt::Display for SnrCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SnrCondition::Clean => write!(f, "clean"),
            SnrCondition::Noisy { level_db } => write!(f, "{level_db}"),
        }
    }
}

impl std::str::FromStr for SnrCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("clean") {
            return Ok(SnrCondition::Clean);
        }
        let level: i32 = s.parse().map_err(|_| Error::Parse {
            what: "SNR condition",
            input: s.to_string(),
        })?;
        SnrCondition::noisy(level)
    }
}

/// Draws one of the nine augmentation outcomes (eight SNRs or clean)
/// uniformly.
pub fn sample_snr_condition(rng: &mut impl Rng) -> SnrCondition {
    let idx = rng.gen_range(0..=SNR_GRID_DB.len());
    if idx == SNR_GRID_DB.len() {
        SnrCondition::Clean
    } else {
        SnrCondition::Noisy {
            level_db: SNR_GRID_DB[idx],
        }
    }
}

/// Adds noise to speech at an exact whole-utterance SNR.
///
/// Clean passes the speech through unchanged. Noisy scales the leading
/// `speech.len()` noise samples by `g = rms(speech) / (rms(noise) *
/// 10^(level/20))` so the re-measured SNR equals `level_db` exactly. The sum
/// may exceed [-1, 1]; clamping happens only at file export.
pub fn mix_at_snr(
    speech: &AudioSignal,
    noise: &AudioSignal,
    condition: SnrCondition,
) -> Result<AudioSignal> {
    let level_db = match condition {
        SnrCondition::Clean => return Ok(speech.clone()),
        SnrCondition::Noisy { level_db } => level_db,
    };
    if !SNR_GRID_DB.contains(&level_db) {
        return Err(Error::InvalidSnrLevel(level_db));
    }
    if noise.len() < speech.len() {
        return Err(Error::NoiseTooShort {
            noise: noise.len(),
            speech: speech.len(),
        });
    }
    let speech_rms = speech.rms();
    let noise_slice = &noise.samples[..speech.len()];
    let noise_rms = rms(noise_slice)?;
    if speech_rms == 0.0 || noise_rms == 0.0 {
        return Err(Error::ZeroRms);
    }
    let gain = speech_rms / (noise_rms * 10f64.powf(level_db as f64 / 20.0));
    let samples = speech
        .samples
        .iter()
        .zip(noise_slice)
        .map(|(s, n)| s + gain * n)
        .collect();
    AudioSignal::new(samples)
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("empty signal: {0}")]
    EmptySignal(&'static str),

    #[error("signal has zero RMS, cannot rescale silence")]
    ZeroRms,

    #[error("non-finite sample value in signal")]
    NonFiniteSample,

    #[error("invalid SNR level {0} dB: must be one of -15..6 in steps of 3")]
    InvalidSnrLevel(i32),

    #[error("noise shorter than speech: {noise} < {speech} samples")]
    NoiseTooShort { noise: usize, speech: usize },

    #[error("noise source file missing: {0}")]
    MissingNoiseFile(PathBuf),

    #[error("speaker {speaker} has {available} utterances, split needs {required}")]
    InsufficientUtterances {
        speaker: String,
        available: usize,
        required: usize,
    },

    #[error("not enough speakers: {available} available, split needs {required}")]
    InsufficientSpeakers { available: usize, required: usize },

    #[error(
        "gender balance unsatisfiable for {part}: requires {required} {gender} speakers, \
         {available} available"
    )]
    GenderBalance {
        part: &'static str,
        gender: &'static str,
        required: usize,
        available: usize,
    },

    #[error("{part} size {size} cannot be split into equal female/male halves")]
    OddBalancedPart { part: &'static str, size: usize },

    #[error("lombard fraction {0} outside [0, 1]")]
    InvalidFraction(f64),

    #[error("train part needs {required} Lombard utterances, only {available} present")]
    InsufficientLombard { required: usize, available: usize },

    #[error("train part lacks condition {0}; cannot mix Lombard fraction")]
    MissingCondition(String),

    #[error("unknown utterance id {0}")]
    UnknownUtterance(String),

    #[error("condition {condition} absent from test set")]
    ConditionAbsent { condition: String },

    #[error("stable landmark points are degenerate (collinear): {0}")]
    DegenerateLandmarks(String),

    #[error("frame dimensions {got_h}x{got_w} do not match expected {want_h}x{want_w}")]
    FrameDimMismatch {
        got_h: usize,
        got_w: usize,
        want_h: usize,
        want_w: usize,
    },

    #[error("ROI spec invalid: crop {crop_w}x{crop_h} must be smaller than box {box_w}x{box_h}")]
    InvalidRoiSpec {
        box_w: usize,
        box_h: usize,
        crop_w: usize,
        crop_h: usize,
    },

    #[error("audio input too short: {got} samples, need at least {need}")]
    AudioTooShort { got: usize, need: usize },

    #[error("feature frame counts differ: visual {visual} vs audio {audio}")]
    FrameCountMismatch { visual: usize, audio: usize },

    #[error("model config invalid: {0}")]
    InvalidModelConfig(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("checkpoint is for modality {got}, expected {want}")]
    ModalityMismatch { got: String, want: String },

    #[error("oracle size guard violated: T={t}, charset={charset} (max T=10, charset=5)")]
    OracleSizeGuard { t: usize, charset: usize },

    #[error("label sequence contains the blank index {0}")]
    BlankInTarget(usize),

    #[error("training diverged in phase {phase} at epoch {epoch}: loss = {loss}")]
    TrainingDiverged {
        phase: String,
        epoch: usize,
        loss: f64,
    },

    #[error("phase {phase} requires a prior {missing} checkpoint")]
    MissingPhaseCheckpoint { phase: String, missing: String },

    #[error("experiment grid misses checkpoint for cell {0}")]
    MissingCell(String),

    #[error("empty result table")]
    EmptyTable,

    #[error("empty reference: WER undefined")]
    EmptyReference,

    #[error("cannot parse {what}: {input}")]
    Parse { what: &'static str, input: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

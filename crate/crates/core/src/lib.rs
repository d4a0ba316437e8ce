//! End-to-end audio-visual speech recognition toolkit built around the
//! Lombard effect: condition-matched and mismatched train/test experiments
//! over Lombard (L), non-Lombard (NL) and compensated-Lombard (CL) speech
//! at controlled SNR levels, with WER reporting.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`corpus`]: sentence grammar, utterance metadata, evaluation splits and
//!   synthetic desk-scale fixture corpora,
//! - [`audio`]: waveform types, RMS normalisation, noise synthesis and
//!   exact-SNR mixing,
//! - [`video`]: face alignment, mouth-ROI extraction and crop/flip
//!   augmentation,
//! - [`nn`]: the small CPU tensor layers (conv, GRU, batch norm, pooling)
//!   with hand-written backward passes,
//! - [`model`]: the audio stream, visual stream and fusion head producing
//!   per-frame character log-probabilities,
//! - [`ctc`]: CTC loss (log-space forward-backward), an enumeration oracle,
//!   and greedy/prefix-beam decoders,
//! - [`training`]: the three-phase schedule (stream pretraining, frozen
//!   fusion, fine-tuning) with checkpoints and run manifests,
//! - [`eval`]: WER, experiment grids, the Lombard-fraction sweep and
//!   CSV/plot report emission.

pub mod audio;
pub mod charset;
pub mod corpus;
pub mod ctc;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod seeds;
pub mod training;
pub mod video;

pub use error::{Error, Result};

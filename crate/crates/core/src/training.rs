//! Three-phase training: audio and visual streams are pretrained
//! independently with CTC, a fusion head is trained on top of the frozen
//! streams, and finally the whole audio-visual model is fine-tuned
//! end-to-end. Every random decision derives from the schedule seed through
//! [`crate::seeds`], so runs are reproducible and resumable, and every run
//! emits a manifest that pins the data conditioning it was trained under.
//!
//! Media are cached per utterance at their deterministic preprocessing
//! stage (condition-normalized waveform, box-level mouth ROI); the
//! stochastic parts (noise mixing, crop/flip) are recomputed every epoch.
//! The cache is sized for desk-scale corpora, not thousand-hour sets.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Array3, ArrayD};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::audio::{
    make_noise, mix_at_snr, normalize_condition, sample_snr_condition, AudioSignal, NoiseKind,
    RmsStats, SnrCondition, SNR_GRID_DB,
};
use crate::charset;
use crate::corpus::{mix_lombard_fraction, Condition, Corpus, CorpusSplit, UtteranceMeta};
use crate::ctc::ctc_loss;
use crate::error::{Error, Result};
use crate::model::{AudioModel, AvModel, Checkpoint, Modality, ModelConfig, VisualModel};
use crate::nn::{clip_grad_norm, zero_grads, Adam, TensorVisitor};
use crate::seeds::{derive_seed, rng_for, tag};
use crate::video::{
    augment_rois, mouth_roi_track, normalize_sequence, AugmentMode, FrameSequence, RoiSpec,
    SyntheticLandmarkProvider,
};

/// Global gradient-norm ceiling applied before every optimizer step.
pub const GRAD_CLIP_NORM: f64 = 5.0;

/// Epochs without validation improvement before the learning rate halves.
pub const PLATEAU_PATIENCE: usize = 5;

/// The four stages of the pipeline, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Audio,
    Visual,
    Fusion,
    Finetune,
}

impl Phase {
    pub fn modality(self) -> Modality {
        match self {
            Phase::Audio => Modality::Audio,
            Phase::Visual => Modality::Visual,
            Phase::Fusion | Phase::Finetune => Modality::Av,
        }
    }

    pub fn all() -> [Phase; 4] {
        [Phase::Audio, Phase::Visual, Phase::Fusion, Phase::Finetune]
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Phase::Audio => "audio",
            Phase::Visual => "visual",
            Phase::Fusion => "fusion",
            Phase::Finetune => "finetune",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio" => Ok(Phase::Audio),
            "visual" | "video" => Ok(Phase::Visual),
            "fusion" => Ok(Phase::Fusion),
            "finetune" => Ok(Phase::Finetune),
            _ => Err(Error::Parse {
                what: "training phase",
                input: s.to_string(),
            }),
        }
    }
}

/// Hyperparameters for one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub phase: Phase,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop once validation loss has not improved for this many epochs.
    pub early_stop_patience: Option<usize>,
    pub seed: u64,
}

impl TrainSchedule {
    /// Reference settings: audio lr 1e-3 with batches of 64 for 400 epochs,
    /// visual lr 3e-4 with batches of 10 for 120 epochs, fusion the same
    /// rate for up to 100 epochs with early stopping, fine-tuning for 40.
    pub fn defaults(phase: Phase, seed: u64) -> TrainSchedule {
        let (learning_rate, batch_size, epochs, early_stop_patience) = match phase {
            Phase::Audio => (1e-3, 64, 400, None),
            Phase::Visual => (3e-4, 10, 120, None),
            Phase::Fusion => (3e-4, 10, 100, Some(3 * PLATEAU_PATIENCE)),
            Phase::Finetune => (3e-4, 10, 40, None),
        };
        TrainSchedule {
            phase,
            learning_rate,
            batch_size,
            epochs,
            early_stop_patience,
            seed,
        }
    }
}

/// What speech the training part presents: one fixed condition, or plain
/// speech mixed with a fraction of Lombard utterances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainCondition {
    Pure(Condition),
    Mix(f64),
}

impl TrainCondition {
    /// Share of Lombard presentations, for the run manifest.
    fn lombard_share(&self) -> f64 {
        match self {
            TrainCondition::Pure(Condition::L) => 1.0,
            TrainCondition::Pure(_) => 0.0,
            TrainCondition::Mix(f) => *f,
        }
    }
}

impl std::fmt::Display for TrainCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainCondition::Pure(c) => write!(f, "{c}"),
            TrainCondition::Mix(frac) => write!(f, "mix:{frac}"),
        }
    }
}

impl std::str::FromStr for TrainCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(frac) = s.strip_prefix("mix:") {
            let frac: f64 = frac.parse().map_err(|_| Error::Parse {
                what: "train condition",
                input: s.to_string(),
            })?;
            if !(0.0..=1.0).contains(&frac) {
                return Err(Error::InvalidFraction(frac));
            }
            return Ok(TrainCondition::Mix(frac));
        }
        Ok(TrainCondition::Pure(s.parse()?))
    }
}

/// How noise levels are assigned during training: one fixed level per model,
/// or a level (or the clean signal) sampled uniformly per item and epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnrMode {
    Specific(SnrCondition),
    Augmented,
}

impl std::fmt::Display for SnrMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SnrMode::Specific(snr) => write!(f, "specific:{snr}"),
            SnrMode::Augmented => write!(f, "augmented"),
        }
    }
}

impl std::str::FromStr for SnrMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "augmented" {
            return Ok(SnrMode::Augmented);
        }
        if let Some(rest) = s.strip_prefix("specific:") {
            return Ok(SnrMode::Specific(rest.parse()?));
        }
        Err(Error::Parse {
            what: "SNR mode",
            input: s.to_string(),
        })
    }
}

/// Data conditioning for one training run: speech condition, noise policy
/// and ROI geometry. Validation always uses `val_snr` (never sampled) and
/// the deterministic center crop.
#[derive(Debug, Clone)]
pub struct Conditioning {
    pub condition: TrainCondition,
    pub snr_mode: SnrMode,
    pub noise: NoiseKind,
    pub val_snr: SnrCondition,
    pub roi: RoiSpec,
}

impl Conditioning {
    /// `val_snr` defaults to the specific level, or clean when augmenting.
    pub fn new(
        condition: TrainCondition,
        snr_mode: SnrMode,
        noise: NoiseKind,
        roi: RoiSpec,
    ) -> Conditioning {
        let val_snr = match snr_mode {
            SnrMode::Specific(snr) => snr,
            SnrMode::Augmented => SnrCondition::Clean,
        };
        Conditioning {
            condition,
            snr_mode,
            noise,
            val_snr,
            roi,
        }
    }

    /// No added noise anywhere; for overfit checks and smoke tests.
    pub fn clean(condition: TrainCondition, roi: RoiSpec) -> Conditioning {
        Conditioning::new(
            condition,
            SnrMode::Specific(SnrCondition::Clean),
            NoiseKind::Babble,
            roi,
        )
    }
}

/// Everything needed to reproduce a run: seeds, conditioning, schedule and
/// the normalization statistics measured on the training part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub phase: String,
    pub seed: u64,
    pub condition: String,
    pub snr_mode: String,
    pub noise: String,
    pub val_snr: String,
    pub roi: RoiSpec,
    pub train_size: usize,
    pub val_size: usize,
    pub lombard_share: f64,
    pub mean_rms_lombard: f64,
    pub mean_rms_plain: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub early_stop_patience: Option<usize>,
}

impl RunManifest {
    /// Stable identifier over the serialized manifest.
    pub fn id(&self) -> String {
        let json = serde_json::to_string(self).expect("manifest serializes");
        format!("{:016x}", tag(&json))
    }
}

/// One training utterance at its deterministic preprocessing stage.
struct Item {
    labels: Vec<usize>,
    wave: Option<AudioSignal>,
    roi: Option<FrameSequence>,
}

/// Condition-normalized waveform for one utterance as presented under
/// `presented`. Lombard recordings presented as CL land at plain energy.
pub fn prepare_wave(
    corpus: &Corpus,
    meta: &UtteranceMeta,
    presented: Condition,
    stats: &RmsStats,
) -> Result<AudioSignal> {
    let raw = corpus.load_audio(meta)?;
    normalize_condition(&raw, presented, stats)
}

/// Box-level mouth ROI track for one utterance.
pub fn prepare_roi_box(
    corpus: &Corpus,
    meta: &UtteranceMeta,
    roi: &RoiSpec,
) -> Result<FrameSequence> {
    let frames = corpus.load_frames(meta)?;
    mouth_roi_track(&frames, &SyntheticLandmarkProvider, roi)
}

fn load_items(
    corpus: &Corpus,
    selection: &[(String, Condition)],
    stats: &RmsStats,
    needs_audio: bool,
    needs_video: bool,
    roi: &RoiSpec,
) -> Result<Vec<Item>> {
    let mut items = Vec::with_capacity(selection.len());
    for (id, presented) in selection {
        let meta = corpus.get(id)?;
        let wave = if needs_audio {
            Some(prepare_wave(corpus, meta, *presented, stats)?)
        } else {
            None
        };
        let roi = if needs_video {
            Some(prepare_roi_box(corpus, meta, roi)?)
        } else {
            None
        };
        items.push(Item {
            labels: charset::encode(&meta.transcript()),
            wave,
            roi,
        });
    }
    Ok(items)
}

/// Picks the training utterances and the condition each is presented under.
/// Pure conditions select the matching recordings (CL selects Lombard
/// recordings and presents them compensated); a mix keeps all plain
/// utterances plus a Lombard subset, each presented as recorded.
fn train_presentation(
    split: &CorpusSplit,
    corpus: &Corpus,
    condition: &TrainCondition,
    seed: u64,
) -> Result<Vec<(String, Condition)>> {
    let selection = match condition {
        TrainCondition::Pure(c) => presented_as(&split.train, corpus, *c)?,
        TrainCondition::Mix(fraction) => {
            let mut rng = rng_for(seed, &[tag("mix")]);
            let mixed = mix_lombard_fraction(split, corpus, *fraction, &mut rng)?;
            as_recorded(&mixed.train, corpus)?
        }
    };
    if selection.is_empty() {
        return Err(Error::ConditionAbsent {
            condition: condition.to_string(),
        });
    }
    Ok(selection)
}

/// Validation counterpart: pure conditions validate on the same presented
/// condition; mixes validate on all validation utterances as recorded.
fn val_presentation(
    split: &CorpusSplit,
    corpus: &Corpus,
    condition: &TrainCondition,
) -> Result<Vec<(String, Condition)>> {
    match condition {
        TrainCondition::Pure(c) => presented_as(&split.val, corpus, *c),
        TrainCondition::Mix(_) => as_recorded(&split.val, corpus),
    }
}

fn presented_as(
    ids: &[String],
    corpus: &Corpus,
    presented: Condition,
) -> Result<Vec<(String, Condition)>> {
    let source = presented.source_recording();
    let mut out = Vec::new();
    for id in ids {
        if corpus.get(id)?.condition == source {
            out.push((id.clone(), presented));
        }
    }
    Ok(out)
}

fn as_recorded(ids: &[String], corpus: &Corpus) -> Result<Vec<(String, Condition)>> {
    ids.iter()
        .map(|id| Ok((id.clone(), corpus.get(id)?.condition)))
        .collect()
}

/// The model being trained in one phase. Fusion freezes both streams: they
/// run in inference mode and receive no gradients or optimizer updates.
pub enum PhaseModel {
    Audio(AudioModel),
    Visual(VisualModel),
    Av {
        model: AvModel,
        freeze_streams: bool,
    },
}

/// Per-batch loss terms: summed CTC loss over reachable items, their count,
/// and how many items were skipped as unreachable.
struct BatchTerms {
    loss_sum: f64,
    reachable: usize,
    skipped: usize,
}

/// CTC losses and input gradients for one batch; gradients are scaled for a
/// batch-mean objective and unreachable items contribute zero.
fn ctc_terms(logps: &[Array2<f64>], labels: &[Vec<usize>]) -> Result<(Vec<Array2<f64>>, BatchTerms)> {
    let mut dys = Vec::with_capacity(logps.len());
    let mut terms = BatchTerms {
        loss_sum: 0.0,
        reachable: 0,
        skipped: 0,
    };
    for (logp, target) in logps.iter().zip(labels) {
        match ctc_loss(logp, target)? {
            crate::ctc::CtcLoss::Reachable { loss, grad } => {
                terms.loss_sum += loss;
                terms.reachable += 1;
                dys.push(grad);
            }
            crate::ctc::CtcLoss::UnreachableTarget => {
                terms.skipped += 1;
                dys.push(Array2::zeros(logp.raw_dim()));
            }
        }
    }
    if terms.reachable > 0 {
        let scale = 1.0 / terms.reachable as f64;
        for dy in &mut dys {
            dy.mapv_inplace(|v| v * scale);
        }
    }
    Ok((dys, terms))
}

impl PhaseModel {
    pub fn modality(&self) -> Modality {
        match self {
            PhaseModel::Audio(_) => Modality::Audio,
            PhaseModel::Visual(_) => Modality::Visual,
            PhaseModel::Av { .. } => Modality::Av,
        }
    }

    fn needs_audio(&self) -> bool {
        !matches!(self, PhaseModel::Visual(_))
    }

    fn needs_video(&self) -> bool {
        !matches!(self, PhaseModel::Audio(_))
    }

    /// Tensors the optimizer may touch; frozen streams are excluded.
    fn visit_trainable(&mut self, f: &mut TensorVisitor<'_>) {
        match self {
            PhaseModel::Audio(m) => m.visit("model", f),
            PhaseModel::Visual(m) => m.visit("model", f),
            PhaseModel::Av {
                model,
                freeze_streams: true,
            } => model.head.visit("model.head", f),
            PhaseModel::Av { model, .. } => model.visit("model", f),
        }
    }

    fn snapshot(&mut self) -> BTreeMap<String, ArrayD<f64>> {
        match self {
            PhaseModel::Audio(m) => m.snapshot(),
            PhaseModel::Visual(m) => m.snapshot(),
            PhaseModel::Av { model, .. } => model.snapshot(),
        }
    }

    fn restore(&mut self, tensors: &BTreeMap<String, ArrayD<f64>>) -> Result<()> {
        match self {
            PhaseModel::Audio(m) => m.restore(tensors),
            PhaseModel::Visual(m) => m.restore(tensors),
            PhaseModel::Av { model, .. } => model.restore(tensors),
        }
    }

    /// Forward, CTC and backward for one batch; gradients accumulate into
    /// the trainable parameters.
    fn train_batch(
        &mut self,
        waves: &[Array1<f64>],
        rois: &[Array3<f64>],
        labels: &[Vec<usize>],
    ) -> Result<BatchTerms> {
        match self {
            PhaseModel::Audio(m) => {
                let (logps, ctx) = m.forward_batch(waves, true)?;
                let (dys, terms) = ctc_terms(&logps, labels)?;
                m.backward_batch(&ctx, &dys);
                Ok(terms)
            }
            PhaseModel::Visual(m) => {
                let (logps, ctx) = m.forward_batch(rois, true)?;
                let (dys, terms) = ctc_terms(&logps, labels)?;
                m.backward_batch(&ctx, &dys);
                Ok(terms)
            }
            PhaseModel::Av {
                model,
                freeze_streams,
            } => {
                let (logps, ctx) = model.forward_batch(waves, rois, true, *freeze_streams)?;
                let (dys, terms) = ctc_terms(&logps, labels)?;
                model.backward_batch(&ctx, &dys, !*freeze_streams);
                Ok(terms)
            }
        }
    }

    /// Inference-mode CTC loss terms, without gradients.
    fn val_batch(
        &mut self,
        waves: &[Array1<f64>],
        rois: &[Array3<f64>],
        labels: &[Vec<usize>],
    ) -> Result<BatchTerms> {
        let logps = match self {
            PhaseModel::Audio(m) => m.forward_batch(waves, false)?.0,
            PhaseModel::Visual(m) => m.forward_batch(rois, false)?.0,
            PhaseModel::Av { model, .. } => model.forward_batch(waves, rois, false, false)?.0,
        };
        let (_, terms) = ctc_terms(&logps, labels)?;
        Ok(terms)
    }
}

/// Per-epoch record kept in checkpoint metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub skipped: usize,
}

/// Result of one phase: the best-validation checkpoint (which also carries
/// the final parameters and optimizer state for resuming), the manifest and
/// the full loss history.
#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub manifest: RunManifest,
    pub history: Vec<EpochStats>,
}

struct ResumeState {
    manifest: RunManifest,
    next_epoch: usize,
    lr: f64,
    since_best: usize,
    best_epoch: usize,
    best_val: f64,
    best: BTreeMap<String, ArrayD<f64>>,
    adam_step: u64,
    moments: BTreeMap<String, (ArrayD<f64>, ArrayD<f64>)>,
    history: Vec<EpochStats>,
}

fn meta_u64(meta: &serde_json::Value, key: &str) -> Result<u64> {
    meta[key]
        .as_u64()
        .ok_or_else(|| Error::CheckpointFormat(format!("meta field {key} missing or not integer")))
}

fn meta_f64(meta: &serde_json::Value, key: &str) -> Result<f64> {
    meta[key]
        .as_f64()
        .ok_or_else(|| Error::CheckpointFormat(format!("meta field {key} missing or not number")))
}

impl ResumeState {
    fn from_checkpoint(ck: &Checkpoint) -> Result<ResumeState> {
        let mut best = BTreeMap::new();
        let mut moments: BTreeMap<String, (ArrayD<f64>, ArrayD<f64>)> = BTreeMap::new();
        for (name, tensor) in &ck.tensors {
            if let Some(rest) = name.strip_prefix("opt.m.") {
                moments.entry(rest.to_string()).or_insert_with(|| {
                    (ArrayD::zeros(tensor.raw_dim()), ArrayD::zeros(tensor.raw_dim()))
                });
                moments.get_mut(rest).unwrap().0 = tensor.clone();
            } else if let Some(rest) = name.strip_prefix("opt.v.") {
                moments.entry(rest.to_string()).or_insert_with(|| {
                    (ArrayD::zeros(tensor.raw_dim()), ArrayD::zeros(tensor.raw_dim()))
                });
                moments.get_mut(rest).unwrap().1 = tensor.clone();
            } else if !name.starts_with("last.") {
                best.insert(name.clone(), tensor.clone());
            }
        }
        let history: Vec<EpochStats> = serde_json::from_value(ck.meta["history"].clone())?;
        let manifest: RunManifest = serde_json::from_value(ck.meta["manifest"].clone())?;
        Ok(ResumeState {
            manifest,
            next_epoch: meta_u64(&ck.meta, "epochs_run")? as usize,
            lr: meta_f64(&ck.meta, "final_lr")?,
            since_best: meta_u64(&ck.meta, "since_best")? as usize,
            best_epoch: meta_u64(&ck.meta, "best_epoch")? as usize,
            best_val: meta_f64(&ck.meta, "best_val_loss")?,
            best,
            adam_step: meta_u64(&ck.meta, "adam_step")?,
            moments,
            history,
        })
    }
}

/// Morphs batch indices into model inputs, applying training augmentation
/// (sampled SNR, fresh noise, random crop/flip) or the deterministic
/// validation presentation (fixed SNR, per-item frozen noise, center crop).
fn materialize(
    items: &[Item],
    idxs: &[usize],
    epoch: usize,
    conditioning: &Conditioning,
    seed: u64,
    train: bool,
    needs_audio: bool,
    needs_video: bool,
) -> Result<(Vec<Array1<f64>>, Vec<Array3<f64>>, Vec<Vec<usize>>)> {
    let mut waves = Vec::new();
    let mut rois = Vec::new();
    let mut labels = Vec::with_capacity(idxs.len());
    for &idx in idxs {
        let item = &items[idx];
        if needs_audio {
            let wave = item.wave.as_ref().expect("audio loaded for this phase");
            let snr = if train {
                match conditioning.snr_mode {
                    SnrMode::Specific(snr) => snr,
                    SnrMode::Augmented => {
                        sample_snr_condition(&mut rng_for(seed, &[tag("snr"), epoch as u64, idx as u64]))
                    }
                }
            } else {
                conditioning.val_snr
            };
            let presented = match snr {
                SnrCondition::Clean => wave.clone(),
                noisy => {
                    let mut noise_rng = if train {
                        rng_for(seed, &[tag("train-noise"), epoch as u64, idx as u64])
                    } else {
                        rng_for(seed, &[tag("val-noise"), idx as u64])
                    };
                    let noise = make_noise(&conditioning.noise, wave.len(), &mut noise_rng)?;
                    mix_at_snr(wave, &noise, noisy)?
                }
            };
            waves.push(Array1::from_vec(presented.samples));
        }
        if needs_video {
            let roi = item.roi.as_ref().expect("video loaded for this phase");
            let mode = if train {
                AugmentMode::Train
            } else {
                AugmentMode::Test
            };
            let mut crop_rng = rng_for(seed, &[tag("crop"), epoch as u64, idx as u64]);
            let cropped = augment_rois(roi, &conditioning.roi, mode, &mut crop_rng)?;
            rois.push(normalize_sequence(&cropped));
        }
        labels.push(item.labels.clone());
    }
    Ok((waves, rois, labels))
}

/// Trains one phase from scratch. The returned checkpoint evaluates with
/// the best-validation parameters under `model.*` and additionally carries
/// `last.*` parameters plus `opt.*` Adam moments so training can resume.
pub fn train_phase(
    model: PhaseModel,
    config: &ModelConfig,
    corpus: &Corpus,
    split: &CorpusSplit,
    conditioning: &Conditioning,
    schedule: &TrainSchedule,
) -> Result<TrainOutcome> {
    run_schedule(model, config, corpus, split, conditioning, schedule, None)
}

/// Continues a previously checkpointed phase until `schedule.epochs`. The
/// corpus, split, conditioning and schedule must match the original run;
/// the stored manifest is compared to catch mismatches. Under fixed seeds
/// the combined trajectory is identical to an uninterrupted run.
pub fn resume_phase(
    ck: &Checkpoint,
    corpus: &Corpus,
    split: &CorpusSplit,
    conditioning: &Conditioning,
    schedule: &TrainSchedule,
) -> Result<TrainOutcome> {
    let phase: Phase = ck.meta["phase"]
        .as_str()
        .ok_or_else(|| Error::CheckpointFormat("meta lacks phase".into()))?
        .parse()?;
    if phase != schedule.phase {
        return Err(Error::CheckpointFormat(format!(
            "checkpoint is for phase {phase}, schedule says {}",
            schedule.phase
        )));
    }
    let state = ResumeState::from_checkpoint(ck)?;
    let mut rng = rng_for(schedule.seed, &[tag("init"), phase_init_tag(phase)]);
    let mut model = match phase {
        Phase::Audio => PhaseModel::Audio(AudioModel::new(&ck.config, &mut rng)),
        Phase::Visual => PhaseModel::Visual(VisualModel::new(&ck.config, &mut rng)),
        Phase::Fusion => PhaseModel::Av {
            model: AvModel::new(&ck.config, &mut rng),
            freeze_streams: true,
        },
        Phase::Finetune => PhaseModel::Av {
            model: AvModel::new(&ck.config, &mut rng),
            freeze_streams: false,
        },
    };
    let mut last = BTreeMap::new();
    for (name, tensor) in &ck.tensors {
        if let Some(rest) = name.strip_prefix("last.") {
            last.insert(rest.to_string(), tensor.clone());
        }
    }
    model.restore(&last)?;
    run_schedule(
        model,
        &ck.config,
        corpus,
        split,
        conditioning,
        schedule,
        Some(state),
    )
}

fn phase_init_tag(phase: Phase) -> u64 {
    match phase {
        Phase::Audio => 0,
        Phase::Visual => 1,
        Phase::Fusion | Phase::Finetune => 2,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_schedule(
    mut model: PhaseModel,
    config: &ModelConfig,
    corpus: &Corpus,
    split: &CorpusSplit,
    conditioning: &Conditioning,
    schedule: &TrainSchedule,
    resume: Option<ResumeState>,
) -> Result<TrainOutcome> {
    let stats = corpus.rms_stats(&split.train)?;
    let train_sel = train_presentation(split, corpus, &conditioning.condition, schedule.seed)?;
    let val_sel = val_presentation(split, corpus, &conditioning.condition)?;
    let needs_audio = model.needs_audio();
    let needs_video = model.needs_video();
    let items = load_items(
        corpus,
        &train_sel,
        &stats,
        needs_audio,
        needs_video,
        &conditioning.roi,
    )?;
    let val_items = load_items(
        corpus,
        &val_sel,
        &stats,
        needs_audio,
        needs_video,
        &conditioning.roi,
    )?;

    let manifest = RunManifest {
        phase: schedule.phase.to_string(),
        seed: schedule.seed,
        condition: conditioning.condition.to_string(),
        snr_mode: conditioning.snr_mode.to_string(),
        noise: conditioning.noise.to_string(),
        val_snr: conditioning.val_snr.to_string(),
        roi: conditioning.roi,
        train_size: items.len(),
        val_size: val_items.len(),
        lombard_share: conditioning.condition.lombard_share(),
        mean_rms_lombard: stats.mean_rms_lombard,
        mean_rms_plain: stats.mean_rms_plain,
        learning_rate: schedule.learning_rate,
        batch_size: schedule.batch_size,
        epochs: schedule.epochs,
        early_stop_patience: schedule.early_stop_patience,
    };

    let mut adam = Adam::new(schedule.learning_rate);
    let mut lr = schedule.learning_rate;
    let mut best = model.snapshot();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut since_best = 0usize;
    let mut history: Vec<EpochStats> = Vec::new();
    let mut start_epoch = 0usize;
    if let Some(state) = resume {
        // Resuming may raise the epoch budget or change the early-stop
        // policy, but everything else about the run must be the one the
        // checkpoint was trained under.
        let mut stored = state.manifest.clone();
        stored.epochs = manifest.epochs;
        stored.early_stop_patience = manifest.early_stop_patience;
        if stored != manifest {
            return Err(Error::CheckpointFormat(format!(
                "resume mismatch: checkpoint was trained under manifest {}, \
                 current data and schedule give {}",
                state.manifest.id(),
                manifest.id()
            )));
        }
        adam.step_count = state.adam_step;
        adam.moments = state.moments;
        lr = state.lr;
        best = state.best;
        best_val = state.best_val;
        best_epoch = state.best_epoch;
        since_best = state.since_best;
        start_epoch = state.next_epoch;
        history = state.history;
    }

    for epoch in start_epoch..schedule.epochs {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng_for(schedule.seed, &[tag("order"), epoch as u64]));

        let mut loss_sum = 0.0;
        let mut reachable = 0usize;
        let mut skipped = 0usize;
        for batch in order.chunks(schedule.batch_size.max(1)) {
            let (waves, rois, labels) = materialize(
                &items,
                batch,
                epoch,
                conditioning,
                schedule.seed,
                true,
                needs_audio,
                needs_video,
            )?;
            zero_grads(|f| model.visit_trainable(f));
            let terms = model.train_batch(&waves, &rois, &labels)?;
            loss_sum += terms.loss_sum;
            reachable += terms.reachable;
            skipped += terms.skipped;
            if terms.reachable == 0 {
                continue;
            }
            clip_grad_norm(GRAD_CLIP_NORM, |f| model.visit_trainable(f));
            adam.lr = lr;
            adam.step(|f| model.visit_trainable(f));
        }
        if reachable == 0 {
            return Err(Error::Config(format!(
                "every training item is CTC-unreachable in phase {}: targets need more frames",
                schedule.phase
            )));
        }
        let train_loss = loss_sum / reachable as f64;
        if !train_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                phase: schedule.phase.to_string(),
                epoch,
                loss: train_loss,
            });
        }

        let val_loss = if val_items.is_empty() {
            train_loss
        } else {
            let idxs: Vec<usize> = (0..val_items.len()).collect();
            let mut sum = 0.0;
            let mut n = 0usize;
            for batch in idxs.chunks(schedule.batch_size.max(1)) {
                let (waves, rois, labels) = materialize(
                    &val_items,
                    batch,
                    0,
                    conditioning,
                    schedule.seed,
                    false,
                    needs_audio,
                    needs_video,
                )?;
                let terms = model.val_batch(&waves, &rois, &labels)?;
                sum += terms.loss_sum;
                n += terms.reachable;
            }
            if n == 0 {
                train_loss
            } else {
                sum / n as f64
            }
        };

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = model.snapshot();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best % PLATEAU_PATIENCE == 0 {
                lr *= 0.5;
            }
        }

        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr,
            skipped,
        });

        if let Some(patience) = schedule.early_stop_patience {
            if since_best >= patience {
                break;
            }
        }
    }

    let epochs_run = history.last().map(|h| h.epoch + 1).unwrap_or(0);
    let mut tensors = best.clone();
    for (name, tensor) in model.snapshot() {
        tensors.insert(format!("last.{name}"), tensor);
    }
    for (name, (m, v)) in &adam.moments {
        tensors.insert(format!("opt.m.{name}"), m.clone());
        tensors.insert(format!("opt.v.{name}"), v.clone());
    }
    let checkpoint = Checkpoint {
        config: config.clone(),
        modality: model.modality(),
        meta: json!({
            "phase": schedule.phase.to_string(),
            "manifest": manifest,
            "manifest_id": manifest.id(),
            "epochs_run": epochs_run,
            "best_epoch": best_epoch,
            "best_val_loss": best_val,
            "final_lr": lr,
            "since_best": since_best,
            "adam_step": adam.step_count,
            "history": history,
        }),
        tensors,
    };
    Ok(TrainOutcome {
        checkpoint,
        manifest,
        history,
    })
}

/// Builds the fusion-phase model: fresh head, streams restored from the two
/// pretraining checkpoints.
pub fn fusion_model(
    config: &ModelConfig,
    audio_ck: &Checkpoint,
    visual_ck: &Checkpoint,
    seed: u64,
) -> Result<AvModel> {
    if audio_ck.modality != Modality::Audio {
        return Err(Error::MissingPhaseCheckpoint {
            phase: "fusion".to_string(),
            missing: "audio".to_string(),
        });
    }
    if visual_ck.modality != Modality::Visual {
        return Err(Error::MissingPhaseCheckpoint {
            phase: "fusion".to_string(),
            missing: "visual".to_string(),
        });
    }
    for (ck, which) in [(audio_ck, "audio"), (visual_ck, "visual")] {
        if ck.config != *config {
            return Err(Error::CheckpointFormat(format!(
                "{which} checkpoint was trained with a different model config"
            )));
        }
    }
    let mut model = AvModel::new(config, &mut rng_for(seed, &[tag("init"), 2]));
    let mut tensors = model.snapshot();
    for (name, tensor) in &audio_ck.tensors {
        if let Some(rest) = name.strip_prefix("model.stream.") {
            tensors.insert(format!("model.audio.{rest}"), tensor.clone());
        }
    }
    for (name, tensor) in &visual_ck.tensors {
        if let Some(rest) = name.strip_prefix("model.stream.") {
            tensors.insert(format!("model.visual.{rest}"), tensor.clone());
        }
    }
    model.restore(&tensors)?;
    Ok(model)
}

/// Rebuilds the audio-visual model from a fusion checkpoint for end-to-end
/// fine-tuning.
pub fn finetune_model(config: &ModelConfig, fusion_ck: &Checkpoint) -> Result<AvModel> {
    if fusion_ck.modality != Modality::Av {
        return Err(Error::MissingPhaseCheckpoint {
            phase: "finetune".to_string(),
            missing: "fusion".to_string(),
        });
    }
    if fusion_ck.config != *config {
        return Err(Error::CheckpointFormat(
            "fusion checkpoint was trained with a different model config".to_string(),
        ));
    }
    let mut model = AvModel::new(config, &mut rng_for(0, &[tag("init"), 2]));
    model.restore(&fusion_ck.tensors)?;
    Ok(model)
}

/// Per-phase schedules for a full pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSchedules {
    pub audio: TrainSchedule,
    pub visual: TrainSchedule,
    pub fusion: TrainSchedule,
    pub finetune: TrainSchedule,
}

impl PhaseSchedules {
    /// Reference settings with per-phase seeds derived from one base seed.
    pub fn defaults(seed: u64) -> PhaseSchedules {
        let derive = |phase: Phase, idx: u64| {
            TrainSchedule::defaults(phase, derive_seed(seed, &[tag("phase"), idx]))
        };
        PhaseSchedules {
            audio: derive(Phase::Audio, 0),
            visual: derive(Phase::Visual, 1),
            fusion: derive(Phase::Fusion, 2),
            finetune: derive(Phase::Finetune, 3),
        }
    }

    /// Desk-scale variant: the reference structure with every phase cut to
    /// `epochs` and batches of at most `batch_size`.
    pub fn quick(seed: u64, epochs: usize, batch_size: usize) -> PhaseSchedules {
        let mut schedules = PhaseSchedules::defaults(seed);
        for s in [
            &mut schedules.audio,
            &mut schedules.visual,
            &mut schedules.fusion,
            &mut schedules.finetune,
        ] {
            s.epochs = epochs;
            s.batch_size = batch_size;
            s.early_stop_patience = None;
        }
        schedules
    }

    pub fn for_phase(&self, phase: Phase) -> &TrainSchedule {
        match phase {
            Phase::Audio => &self.audio,
            Phase::Visual => &self.visual,
            Phase::Fusion => &self.fusion,
            Phase::Finetune => &self.finetune,
        }
    }
}

/// Everything a full pipeline run needs besides the corpus and split.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub model: ModelConfig,
    pub condition: TrainCondition,
    pub noise: NoiseKind,
    pub snr_mode: SnrMode,
    pub roi: RoiSpec,
    pub seed: u64,
    pub schedules: PhaseSchedules,
}

impl PipelineConfig {
    fn conditioning(&self) -> Conditioning {
        Conditioning::new(self.condition, self.snr_mode, self.noise.clone(), self.roi)
    }
}

/// Checkpoints produced by one full pipeline run: the two stream models,
/// the frozen-stream fusion stage, and the fine-tuned audio-visual model.
pub struct PipelineArtifacts {
    pub audio: Checkpoint,
    pub visual: Checkpoint,
    pub fusion: Checkpoint,
    pub av: Checkpoint,
    pub manifests: Vec<RunManifest>,
}

/// Runs all four phases in order and returns one evaluable checkpoint per
/// modality variant (audio-only, video-only, audio-visual) plus the
/// intermediate fusion stage.
pub fn run_full_pipeline(
    corpus: &Corpus,
    split: &CorpusSplit,
    config: &PipelineConfig,
) -> Result<PipelineArtifacts> {
    let conditioning = config.conditioning();
    let mut manifests = Vec::with_capacity(4);

    let schedule = &config.schedules.audio;
    let model = PhaseModel::Audio(AudioModel::new(
        &config.model,
        &mut rng_for(schedule.seed, &[tag("init"), 0]),
    ));
    let audio = train_phase(model, &config.model, corpus, split, &conditioning, schedule)?;
    manifests.push(audio.manifest.clone());

    let schedule = &config.schedules.visual;
    let model = PhaseModel::Visual(VisualModel::new(
        &config.model,
        &mut rng_for(schedule.seed, &[tag("init"), 1]),
    ));
    let visual = train_phase(model, &config.model, corpus, split, &conditioning, schedule)?;
    manifests.push(visual.manifest.clone());

    let schedule = &config.schedules.fusion;
    let model = PhaseModel::Av {
        model: fusion_model(
            &config.model,
            &audio.checkpoint,
            &visual.checkpoint,
            schedule.seed,
        )?,
        freeze_streams: true,
    };
    let fusion = train_phase(model, &config.model, corpus, split, &conditioning, schedule)?;
    manifests.push(fusion.manifest.clone());

    let schedule = &config.schedules.finetune;
    let model = PhaseModel::Av {
        model: finetune_model(&config.model, &fusion.checkpoint)?,
        freeze_streams: false,
    };
    let av = train_phase(model, &config.model, corpus, split, &conditioning, schedule)?;
    manifests.push(av.manifest.clone());

    Ok(PipelineArtifacts {
        audio: audio.checkpoint,
        visual: visual.checkpoint,
        fusion: fusion.checkpoint,
        av: av.checkpoint,
        manifests,
    })
}

/// Trains one audio-only model per grid SNR level, for the level-matched
/// comparison against a single SNR-augmented model.
pub fn train_snr_specific_audio(
    corpus: &Corpus,
    split: &CorpusSplit,
    config: &PipelineConfig,
) -> Result<Vec<(SnrCondition, Checkpoint)>> {
    let mut out = Vec::with_capacity(SNR_GRID_DB.len());
    for (idx, &level_db) in SNR_GRID_DB.iter().enumerate() {
        let snr = SnrCondition::Noisy { level_db };
        let mut schedule = config.schedules.audio.clone();
        schedule.seed = derive_seed(schedule.seed, &[tag("snr-specific"), idx as u64]);
        let conditioning = Conditioning::new(
            config.condition,
            SnrMode::Specific(snr),
            config.noise.clone(),
            config.roi,
        );
        let model = PhaseModel::Audio(AudioModel::new(
            &config.model,
            &mut rng_for(schedule.seed, &[tag("init"), 0]),
        ));
        let outcome = train_phase(
            model,
            &config.model,
            corpus,
            split,
            &conditioning,
            &schedule,
        )?;
        out.push((snr, outcome.checkpoint));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_fixture_corpus, FixtureSpec, SentenceGrammar, SplitProtocol, View};
    use crate::nn::ParamMut;

    /// Two-speaker fixture with `utts` sentences per condition; speaker 0
    /// trains, speaker 1 validates.
    fn micro(utts: usize, seed: u64) -> (tempfile::TempDir, Corpus, CorpusSplit) {
        let dir = tempfile::tempdir().unwrap();
        let spec = FixtureSpec {
            n_speakers: 2,
            utt_per_condition: utts,
            seed,
            view: View::Frontal,
        };
        let corpus = synth_fixture_corpus(dir.path(), &spec, &SentenceGrammar::standard()).unwrap();
        let part = |speaker: &str| -> Vec<String> {
            corpus
                .utterances
                .iter()
                .filter(|u| u.speaker_id == speaker)
                .map(|u| u.id.clone())
                .collect()
        };
        let split = CorpusSplit {
            protocol: SplitProtocol::MultiSpeaker,
            train: part("spk00"),
            val: part("spk01"),
            test: Vec::new(),
            lombard_fraction: 1.0,
        };
        (dir, corpus, split)
    }

    fn quick_schedule(phase: Phase, seed: u64, epochs: usize) -> TrainSchedule {
        TrainSchedule {
            phase,
            learning_rate: 1e-3,
            batch_size: 4,
            epochs,
            early_stop_patience: None,
            seed,
        }
    }

    fn clean_nl() -> Conditioning {
        Conditioning::clean(TrainCondition::Pure(Condition::Nl), RoiSpec::fixture())
    }

    #[test]
    fn schedule_defaults_match_reference_settings() {
        let a = TrainSchedule::defaults(Phase::Audio, 0);
        assert_eq!((a.learning_rate, a.batch_size, a.epochs), (1e-3, 64, 400));
        assert_eq!(a.early_stop_patience, None);
        let v = TrainSchedule::defaults(Phase::Visual, 0);
        assert_eq!((v.learning_rate, v.batch_size, v.epochs), (3e-4, 10, 120));
        let f = TrainSchedule::defaults(Phase::Fusion, 0);
        assert_eq!((f.learning_rate, f.batch_size, f.epochs), (3e-4, 10, 100));
        assert!(f.early_stop_patience.is_some());
        let t = TrainSchedule::defaults(Phase::Finetune, 0);
        assert_eq!((t.learning_rate, t.batch_size, t.epochs), (3e-4, 10, 40));
    }

    #[test]
    fn condition_and_mode_strings_round_trip() {
        for s in ["NL", "L", "CL", "mix:0.25", "mix:1"] {
            let c: TrainCondition = s.parse().unwrap();
            let back: TrainCondition = c.to_string().parse().unwrap();
            assert_eq!(c, back);
        }
        for s in ["augmented", "specific:clean", "specific:-9", "specific:6"] {
            let m: SnrMode = s.parse().unwrap();
            assert_eq!(m.to_string().parse::<SnrMode>().unwrap(), m);
        }
        for p in Phase::all() {
            assert_eq!(p.to_string().parse::<Phase>().unwrap(), p);
        }
        assert!("mix:1.5".parse::<TrainCondition>().is_err());
        assert!("specific:-7".parse::<SnrMode>().is_err());
        assert!("warmup".parse::<Phase>().is_err());
    }

    #[test]
    fn augmented_mode_validates_clean_by_default() {
        let c = Conditioning::new(
            TrainCondition::Pure(Condition::Nl),
            SnrMode::Augmented,
            NoiseKind::Babble,
            RoiSpec::fixture(),
        );
        assert_eq!(c.val_snr, SnrCondition::Clean);
        let snr = SnrCondition::Noisy { level_db: -9 };
        let c = Conditioning::new(
            TrainCondition::Pure(Condition::Nl),
            SnrMode::Specific(snr),
            NoiseKind::Babble,
            RoiSpec::fixture(),
        );
        assert_eq!(c.val_snr, snr);
    }

    #[test]
    fn manifest_id_is_stable_and_field_sensitive() {
        let (_dir, corpus, split) = micro(1, 3);
        let schedule = quick_schedule(Phase::Audio, 5, 1);
        let model = PhaseModel::Audio(AudioModel::new(
            &ModelConfig::tiny(),
            &mut rng_for(5, &[tag("init"), 0]),
        ));
        let out = train_phase(
            model,
            &ModelConfig::tiny(),
            &corpus,
            &split,
            &clean_nl(),
            &schedule,
        )
        .unwrap();
        assert_eq!(out.manifest.id(), out.manifest.id());
        let mut other = out.manifest.clone();
        other.seed ^= 1;
        assert_ne!(out.manifest.id(), other.id());
        assert_eq!(out.checkpoint.meta["manifest_id"], out.manifest.id());
    }

    #[test]
    fn presentation_follows_train_condition() {
        let (_dir, corpus, split) = micro(2, 4);
        let pure = train_presentation(&split, &corpus, &TrainCondition::Pure(Condition::Cl), 0)
            .unwrap();
        assert_eq!(pure.len(), 2);
        for (id, presented) in &pure {
            assert_eq!(*presented, Condition::Cl);
            assert_eq!(corpus.get(id).unwrap().condition, Condition::L);
        }

        let mixed = train_presentation(&split, &corpus, &TrainCondition::Mix(0.5), 0).unwrap();
        assert_eq!(mixed.len(), 3);
        for (id, presented) in &mixed {
            assert_eq!(corpus.get(id).unwrap().condition, *presented);
        }

        let nl_only = CorpusSplit {
            train: split
                .train
                .iter()
                .filter(|id| corpus.get(id).unwrap().condition == Condition::Nl)
                .cloned()
                .collect(),
            ..split.clone()
        };
        let err = train_presentation(&nl_only, &corpus, &TrainCondition::Pure(Condition::L), 0)
            .unwrap_err();
        assert!(matches!(err, Error::ConditionAbsent { .. }));
    }

    #[test]
    fn audio_overfits_a_single_utterance() {
        let (_dir, corpus, split) = micro(1, 7);
        let cfg = ModelConfig::tiny();
        let schedule = quick_schedule(Phase::Audio, 7, 3);
        let model = PhaseModel::Audio(AudioModel::new(&cfg, &mut rng_for(7, &[tag("init"), 0])));
        let out = train_phase(model, &cfg, &corpus, &split, &clean_nl(), &schedule).unwrap();
        assert_eq!(out.history.len(), 3);
        assert!(out.history[2].train_loss < out.history[0].train_loss);
        assert_eq!(out.manifest.train_size, 1);
        assert_eq!(out.manifest.val_size, 1);
        assert_eq!(out.checkpoint.modality, Modality::Audio);
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let (_dir, corpus, split) = micro(1, 9);
        let cfg = ModelConfig::tiny();
        let run = || {
            let schedule = quick_schedule(Phase::Audio, 13, 2);
            let model =
                PhaseModel::Audio(AudioModel::new(&cfg, &mut rng_for(13, &[tag("init"), 0])));
            train_phase(model, &cfg, &corpus, &split, &clean_nl(), &schedule).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.history, b.history);
        assert_eq!(a.checkpoint.tensors, b.checkpoint.tensors);
        assert_eq!(a.checkpoint.meta, b.checkpoint.meta);
    }

    #[test]
    fn resume_matches_an_uninterrupted_run() {
        let (_dir, corpus, split) = micro(1, 11);
        let cfg = ModelConfig::tiny();
        let conditioning = clean_nl();

        let full = quick_schedule(Phase::Audio, 17, 4);
        let model = PhaseModel::Audio(AudioModel::new(&cfg, &mut rng_for(17, &[tag("init"), 0])));
        let whole = train_phase(model, &cfg, &corpus, &split, &conditioning, &full).unwrap();

        let half = quick_schedule(Phase::Audio, 17, 2);
        let model = PhaseModel::Audio(AudioModel::new(&cfg, &mut rng_for(17, &[tag("init"), 0])));
        let first = train_phase(model, &cfg, &corpus, &split, &conditioning, &half).unwrap();
        let resumed =
            resume_phase(&first.checkpoint, &corpus, &split, &conditioning, &full).unwrap();

        assert_eq!(whole.history, resumed.history);
        assert_eq!(whole.checkpoint.tensors, resumed.checkpoint.tensors);
        assert_eq!(whole.checkpoint.meta, resumed.checkpoint.meta);
    }

    #[test]
    fn resume_rejects_a_changed_run() {
        let (_dir, corpus, split) = micro(1, 15);
        let cfg = ModelConfig::tiny();
        let conditioning = clean_nl();
        let schedule = quick_schedule(Phase::Audio, 19, 1);
        let model = PhaseModel::Audio(AudioModel::new(&cfg, &mut rng_for(19, &[tag("init"), 0])));
        let out = train_phase(model, &cfg, &corpus, &split, &conditioning, &schedule).unwrap();

        let mut other = quick_schedule(Phase::Audio, 19, 2);
        other.learning_rate = 5e-4;
        let err = resume_phase(&out.checkpoint, &corpus, &split, &conditioning, &other)
            .unwrap_err();
        assert!(matches!(err, Error::CheckpointFormat(_)));

        let mut wrong_phase = quick_schedule(Phase::Visual, 19, 2);
        wrong_phase.learning_rate = 1e-3;
        let err = resume_phase(&out.checkpoint, &corpus, &split, &conditioning, &wrong_phase)
            .unwrap_err();
        assert!(matches!(err, Error::CheckpointFormat(_)));
    }

    #[test]
    fn fusion_keeps_frozen_streams_bit_identical() {
        let (_dir, corpus, split) = micro(1, 21);
        let cfg = ModelConfig::tiny();
        let conditioning = clean_nl();

        let schedule = quick_schedule(Phase::Audio, 23, 1);
        let model = PhaseModel::Audio(AudioModel::new(&cfg, &mut rng_for(23, &[tag("init"), 0])));
        let audio = train_phase(model, &cfg, &corpus, &split, &conditioning, &schedule).unwrap();

        let schedule = quick_schedule(Phase::Visual, 23, 1);
        let model =
            PhaseModel::Visual(VisualModel::new(&cfg, &mut rng_for(23, &[tag("init"), 1])));
        let visual = train_phase(model, &cfg, &corpus, &split, &conditioning, &schedule).unwrap();

        let mut av = fusion_model(&cfg, &audio.checkpoint, &visual.checkpoint, 23).unwrap();
        let before = av.snapshot();
        for (name, tensor) in &audio.checkpoint.tensors {
            if let Some(rest) = name.strip_prefix("model.stream.") {
                assert_eq!(&before[&format!("model.audio.{rest}")], tensor);
            }
        }

        let schedule = quick_schedule(Phase::Fusion, 23, 2);
        let model = PhaseModel::Av {
            model: av,
            freeze_streams: true,
        };
        let fusion = train_phase(model, &cfg, &corpus, &split, &conditioning, &schedule).unwrap();

        let mut head_changed = false;
        for (name, tensor) in &before {
            let after = &fusion.checkpoint.tensors[&format!("last.{name}")];
            if name.starts_with("model.audio.") || name.starts_with("model.visual.") {
                assert_eq!(after, tensor, "{name} moved despite frozen streams");
            } else if after != tensor {
                head_changed = true;
            }
        }
        assert!(head_changed, "fusion head never updated");
        for key in fusion.checkpoint.tensors.keys() {
            if let Some(rest) = key.strip_prefix("opt.m.") {
                assert!(
                    rest.starts_with("model.head."),
                    "optimizer touched frozen tensor {rest}"
                );
            }
        }
    }

    #[test]
    fn fusion_model_checks_checkpoint_modalities() {
        let cfg = ModelConfig::tiny();
        let mut rng = rng_for(25, &[tag("init"), 0]);
        let mut audio = AudioModel::new(&cfg, &mut rng);
        let mut visual = VisualModel::new(&cfg, &mut rng);
        let audio_ck = Checkpoint {
            config: cfg.clone(),
            modality: Modality::Audio,
            meta: serde_json::Value::Null,
            tensors: audio.snapshot(),
        };
        let visual_ck = Checkpoint {
            config: cfg.clone(),
            modality: Modality::Visual,
            meta: serde_json::Value::Null,
            tensors: visual.snapshot(),
        };
        assert!(fusion_model(&cfg, &audio_ck, &visual_ck, 0).is_ok());
        let err = fusion_model(&cfg, &visual_ck, &visual_ck, 0).unwrap_err();
        assert!(matches!(
            err,
            Error::MissingPhaseCheckpoint { ref missing, .. } if missing == "audio"
        ));
        let err = finetune_model(&cfg, &audio_ck).unwrap_err();
        assert!(matches!(
            err,
            Error::MissingPhaseCheckpoint { ref missing, .. } if missing == "fusion"
        ));
    }

    #[test]
    fn unreachable_targets_are_skipped() {
        let logp = Array2::from_elem((2, 28), (1.0f64 / 28.0).ln());
        let (dys, terms) = ctc_terms(
            &[logp.clone(), logp],
            &[vec![1, 2, 3, 4, 5], vec![1]],
        )
        .unwrap();
        assert_eq!(terms.reachable, 1);
        assert_eq!(terms.skipped, 1);
        assert!(dys[0].iter().all(|&v| v == 0.0));
        assert!(dys[1].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn non_finite_loss_aborts_training() {
        let (_dir, corpus, split) = micro(1, 27);
        let cfg = ModelConfig::tiny();
        let mut broken = AudioModel::new(&cfg, &mut rng_for(29, &[tag("init"), 0]));
        broken.visit("model", &mut |_name: String, mut p: ParamMut<'_>| {
            p.value.fill(f64::NAN);
        });
        let schedule = quick_schedule(Phase::Audio, 29, 1);
        let err = train_phase(
            PhaseModel::Audio(broken),
            &cfg,
            &corpus,
            &split,
            &clean_nl(),
            &schedule,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::TrainingDiverged { ref phase, epoch: 0, .. } if phase == "audio"
        ));
    }

    #[test]
    fn pipeline_runs_all_phases_in_order() {
        let (_dir, corpus, split) = micro(1, 31);
        let config = PipelineConfig {
            model: ModelConfig::tiny(),
            condition: TrainCondition::Pure(Condition::Nl),
            noise: NoiseKind::Babble,
            snr_mode: SnrMode::Specific(SnrCondition::Clean),
            roi: RoiSpec::fixture(),
            seed: 33,
            schedules: PhaseSchedules::quick(33, 1, 4),
        };
        let artifacts = run_full_pipeline(&corpus, &split, &config).unwrap();
        assert_eq!(artifacts.audio.modality, Modality::Audio);
        assert_eq!(artifacts.visual.modality, Modality::Visual);
        assert_eq!(artifacts.fusion.modality, Modality::Av);
        assert_eq!(artifacts.av.modality, Modality::Av);
        let phases: Vec<String> = artifacts
            .manifests
            .iter()
            .map(|m| m.phase.clone())
            .collect();
        assert_eq!(phases, ["audio", "visual", "fusion", "finetune"]);
        let ids: std::collections::BTreeSet<String> =
            artifacts.manifests.iter().map(|m| m.id()).collect();
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn snr_specific_training_covers_the_grid() {
        let (_dir, corpus, split) = micro(1, 35);
        let mut config = PipelineConfig {
            model: ModelConfig::tiny(),
            condition: TrainCondition::Pure(Condition::Nl),
            noise: NoiseKind::Babble,
            snr_mode: SnrMode::Augmented,
            roi: RoiSpec::fixture(),
            seed: 37,
            schedules: PhaseSchedules::quick(37, 1, 4),
        };
        config.schedules.audio.epochs = 1;
        let models = train_snr_specific_audio(&corpus, &split, &config).unwrap();
        assert_eq!(models.len(), SNR_GRID_DB.len());
        for ((snr, ck), &level_db) in models.iter().zip(SNR_GRID_DB.iter()) {
            assert_eq!(*snr, SnrCondition::Noisy { level_db });
            assert_eq!(ck.modality, Modality::Audio);
            assert_eq!(ck.meta["manifest"]["snr_mode"], format!("specific:{level_db}"));
        }
    }
}

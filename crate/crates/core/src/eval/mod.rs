//! Word error rate and the experiment harness: condition-grid and SNR-sweep
//! evaluation of trained checkpoints (or stub scorers), Lombard-fraction
//! curves, and CSV/text/plot report emission.
//!
//! Evaluation noise is seeded per (utterance, SNR level) and never by model,
//! so every model in a comparison hears exactly the same noisy test signals.

mod plot;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Array3};
use rand::seq::index::sample;

use crate::audio::{
    make_noise, mix_at_snr, NoiseKind, RmsStats, SnrCondition, SNR_GRID_DB,
};
use crate::charset;
use crate::corpus::{Condition, Corpus, UtteranceMeta, View};
use crate::ctc::{beam_decode, greedy_decode};
use crate::error::{Error, Result};
use crate::model::{AudioModel, AvModel, Checkpoint, Modality, VisualModel};
use crate::seeds::{rng_for, tag};
use crate::training::{prepare_roi_box, prepare_wave, TrainCondition};
use crate::video::RoiSpec;

/// Word-level Levenshtein distance with unit costs, two-row dynamic
/// programming.
pub fn word_edit_distance<R: AsRef<str>, H: AsRef<str>>(reference: &[R], hypothesis: &[H]) -> usize {
    let n = hypothesis.len();
    let mut prev: Vec<usize> = (0..=n).collect();
    let mut cur = vec![0usize; n + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r.as_ref() != h.as_ref());
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n]
}

/// Word error rate: edit distance divided by reference length. Exceeds 1
/// only through insertions.
pub fn wer<R: AsRef<str>, H: AsRef<str>>(reference: &[R], hypothesis: &[H]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(word_edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// How CTC frame posteriors become a label sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoder {
    Greedy,
    Beam(usize),
}

impl Decoder {
    pub fn decode(&self, logps: &Array2<f64>) -> Vec<usize> {
        match self {
            Decoder::Greedy => greedy_decode(logps),
            Decoder::Beam(width) => beam_decode(logps, *width),
        }
    }
}

impl std::fmt::Display for Decoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decoder::Greedy => write!(f, "greedy"),
            Decoder::Beam(w) => write!(f, "beam:{w}"),
        }
    }
}

impl std::str::FromStr for Decoder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "greedy" {
            return Ok(Decoder::Greedy);
        }
        if let Some(w) = s.strip_prefix("beam:") {
            let width: usize = w.parse().map_err(|_| Error::Parse {
                what: "decoder",
                input: s.to_string(),
            })?;
            if width > 0 {
                return Ok(Decoder::Beam(width));
            }
        }
        Err(Error::Parse {
            what: "decoder",
            input: s.to_string(),
        })
    }
}

pub fn modality_code(m: Modality) -> &'static str {
    match m {
        Modality::Audio => "A",
        Modality::Visual => "V",
        Modality::Av => "AV",
    }
}

pub fn parse_modality_code(s: &str) -> Result<Modality> {
    match s {
        "A" => Ok(Modality::Audio),
        "V" => Ok(Modality::Visual),
        "AV" => Ok(Modality::Av),
        _ => Err(Error::Parse {
            what: "modality code",
            input: s.to_string(),
        }),
    }
}

pub fn view_code(v: View) -> &'static str {
    match v {
        View::Frontal => "frontal",
        View::Profile => "profile",
    }
}

pub fn parse_view_code(s: &str) -> Result<View> {
    match s {
        "frontal" => Ok(View::Frontal),
        "profile" => Ok(View::Profile),
        _ => Err(Error::Parse {
            what: "view",
            input: s.to_string(),
        }),
    }
}

/// Figure-legend rendering of a training condition: plain names for pure
/// conditions, "(NL)", "(NL,0.25L)" or "(NL,L)" for mixes.
pub fn train_label(c: &TrainCondition) -> String {
    match c {
        TrainCondition::Pure(c) => c.to_string(),
        TrainCondition::Mix(f) if *f == 0.0 => "(NL)".to_string(),
        TrainCondition::Mix(f) if *f == 1.0 => "(NL,L)".to_string(),
        TrainCondition::Mix(f) => format!("(NL,{f}L)"),
    }
}

pub fn parse_train_label(s: &str) -> Result<TrainCondition> {
    let err = || Error::Parse {
        what: "train condition label",
        input: s.to_string(),
    };
    if let Some(inner) = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        return match inner {
            "NL" => Ok(TrainCondition::Mix(0.0)),
            "NL,L" => Ok(TrainCondition::Mix(1.0)),
            _ => {
                let frac = inner
                    .strip_prefix("NL,")
                    .and_then(|r| r.strip_suffix('L'))
                    .ok_or_else(err)?;
                let frac: f64 = frac.parse().map_err(|_| err())?;
                if (0.0..=1.0).contains(&frac) {
                    Ok(TrainCondition::Mix(frac))
                } else {
                    Err(Error::InvalidFraction(frac))
                }
            }
        };
    }
    Ok(TrainCondition::Pure(s.parse()?))
}

/// One evaluated grid point: a model (modality, view, training condition)
/// against a test condition at one SNR, with its pooled WER.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentCell {
    pub modality: Modality,
    pub view: View,
    pub train_condition: TrainCondition,
    pub test_condition: Condition,
    pub snr: SnrCondition,
    pub wer: f64,
    pub n_words: usize,
    pub manifest_id: String,
}

impl ExperimentCell {
    /// The "X-Y" convention: trained on X, tested on Y.
    pub fn label(&self) -> String {
        format!("{}-{}", train_label(&self.train_condition), self.test_condition)
    }

    /// Parses an "X-Y" label back into (train, test) conditions.
    pub fn parse_label(s: &str) -> Result<(TrainCondition, Condition)> {
        let (train, test) = s.rsplit_once('-').ok_or_else(|| Error::Parse {
            what: "cell label",
            input: s.to_string(),
        })?;
        Ok((parse_train_label(train)?, test.parse()?))
    }

    fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}",
            modality_code(self.modality),
            view_code(self.view),
            self.label(),
            self.snr
        )
    }
}

/// A set of experiment cells with unique (modality, view, train, test, SNR)
/// keys; rows carry their source run manifest ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub cells: Vec<ExperimentCell>,
}

impl ResultTable {
    pub fn new() -> ResultTable {
        ResultTable::default()
    }

    pub fn insert(&mut self, cell: ExperimentCell) -> Result<()> {
        let key = cell.key();
        if self.cells.iter().any(|c| c.key() == key) {
            return Err(Error::Manifest(format!("duplicate experiment cell {key}")));
        }
        self.cells.push(cell);
        Ok(())
    }

    pub fn get(
        &self,
        modality: Modality,
        view: View,
        label: &str,
        snr: SnrCondition,
    ) -> Option<&ExperimentCell> {
        self.cells.iter().find(|c| {
            c.modality == modality && c.view == view && c.label() == label && c.snr == snr
        })
    }

    /// Cells ordered for stable emission: modality, view, label, then SNR
    /// from the noisiest grid level up to clean.
    pub fn sorted(&self) -> Vec<&ExperimentCell> {
        let mut cells: Vec<&ExperimentCell> = self.cells.iter().collect();
        cells.sort_by_key(|c| {
            (
                modality_code(c.modality),
                view_code(c.view),
                c.label(),
                snr_rank(c.snr),
            )
        });
        cells
    }
}

fn snr_rank(snr: SnrCondition) -> i64 {
    match snr {
        SnrCondition::Noisy { level_db } => level_db as i64,
        SnrCondition::Clean => i64::MAX,
    }
}

/// One test utterance materialized for scoring: condition-normalized (and
/// possibly noise-mixed) waveform, center-cropped normalized ROI stack, and
/// the presentation context.
pub struct EvalInput<'a> {
    pub meta: &'a UtteranceMeta,
    pub presented: Condition,
    pub snr: SnrCondition,
    pub wave: Option<Array1<f64>>,
    pub rois: Option<Array3<f64>>,
}

/// Anything that turns a test utterance into CTC frame log-probabilities.
pub trait FrameScorer {
    fn modality(&self) -> Modality;
    fn score(&mut self, input: &EvalInput<'_>) -> Result<Array2<f64>>;
}

/// A trained network restored from a checkpoint.
pub enum NetworkRecognizer {
    Audio(AudioModel),
    Visual(VisualModel),
    Av(AvModel),
}

impl NetworkRecognizer {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<NetworkRecognizer> {
        let mut rng = rng_for(0, &[tag("restore")]);
        Ok(match ck.modality {
            Modality::Audio => {
                let mut m = AudioModel::new(&ck.config, &mut rng);
                m.restore(&ck.tensors)?;
                NetworkRecognizer::Audio(m)
            }
            Modality::Visual => {
                let mut m = VisualModel::new(&ck.config, &mut rng);
                m.restore(&ck.tensors)?;
                NetworkRecognizer::Visual(m)
            }
            Modality::Av => {
                let mut m = AvModel::new(&ck.config, &mut rng);
                m.restore(&ck.tensors)?;
                NetworkRecognizer::Av(m)
            }
        })
    }

    /// As [`from_checkpoint`](Self::from_checkpoint), but refuses a
    /// checkpoint of the wrong modality.
    pub fn expecting(ck: &Checkpoint, want: Modality) -> Result<NetworkRecognizer> {
        if ck.modality != want {
            return Err(Error::ModalityMismatch {
                got: ck.modality.to_string(),
                want: want.to_string(),
            });
        }
        NetworkRecognizer::from_checkpoint(ck)
    }
}

impl FrameScorer for NetworkRecognizer {
    fn modality(&self) -> Modality {
        match self {
            NetworkRecognizer::Audio(_) => Modality::Audio,
            NetworkRecognizer::Visual(_) => Modality::Visual,
            NetworkRecognizer::Av(_) => Modality::Av,
        }
    }

    fn score(&mut self, input: &EvalInput<'_>) -> Result<Array2<f64>> {
        let wave = || input.wave.as_ref().expect("wave materialized for modality");
        let rois = || input.rois.as_ref().expect("rois materialized for modality");
        let logps = match self {
            NetworkRecognizer::Audio(m) => m.forward(wave())?,
            NetworkRecognizer::Visual(m) => m.forward(rois())?,
            NetworkRecognizer::Av(m) => m.forward(wave(), rois())?,
        };
        Ok(logps.rows)
    }
}

/// Log-probability rows that greedy-decode exactly to `labels`: a one-hot
/// frame per label, with a blank frame separating adjacent repeats.
pub fn one_hot_frames(labels: &[usize], charset_size: usize) -> Array2<f64> {
    let mut path = Vec::with_capacity(2 * labels.len());
    for (i, &l) in labels.iter().enumerate() {
        if i > 0 && labels[i - 1] == l {
            path.push(charset::BLANK);
        }
        path.push(l);
    }
    if path.is_empty() {
        path.push(charset::BLANK);
    }
    let hot = (1.0f64 - 1e-9).ln();
    let cold = (1e-9 / (charset_size - 1) as f64).ln();
    let mut rows = Array2::from_elem((path.len(), charset_size), cold);
    for (t, &l) in path.iter().enumerate() {
        rows[[t, l]] = hot;
    }
    rows
}

/// Emits only blank frames; every reference word becomes a deletion.
pub struct BlankScorer {
    pub modality: Modality,
}

impl FrameScorer for BlankScorer {
    fn modality(&self) -> Modality {
        self.modality
    }

    fn score(&mut self, input: &EvalInput<'_>) -> Result<Array2<f64>> {
        let frames = input.meta.words.len().max(1);
        Ok(one_hot_frames(&vec![charset::BLANK; frames], charset::CHARSET_SIZE))
    }
}

/// Transcript-echo scorer with a condition-dependent planted error rate:
/// emits the reference transcript with `round(rate * words)` word
/// substitutions, deterministically seeded per utterance. Rates mimic the
/// expected ordering (matched < mismatched, audio degrades with noise,
/// fusion degrades less, lipreading ignores noise) so stubbed grids have
/// plausible shape without any training.
pub struct StubScorer {
    pub modality: Modality,
    pub train: TrainCondition,
    pub seed: u64,
}

impl StubScorer {
    fn pure_rate(&self, train: Condition, presented: Condition, snr: SnrCondition) -> f64 {
        let base = match self.modality {
            Modality::Visual => 0.40,
            Modality::Audio => 0.08,
            Modality::Av => 0.05,
        };
        let noise = match (self.modality, snr) {
            (Modality::Visual, _) | (_, SnrCondition::Clean) => 0.0,
            (Modality::Audio, SnrCondition::Noisy { level_db }) => {
                (6 - level_db) as f64 / 3.0 * 0.04
            }
            (Modality::Av, SnrCondition::Noisy { level_db }) => {
                (6 - level_db) as f64 / 3.0 * 0.02
            }
        };
        let mismatch = if train == presented {
            0.0
        } else if presented == Condition::Cl && train == Condition::Nl {
            0.06
        } else {
            0.12
        };
        (base + noise + mismatch).min(1.0)
    }

    fn rate(&self, presented: Condition, snr: SnrCondition) -> f64 {
        match self.train {
            TrainCondition::Pure(c) => self.pure_rate(c, presented, snr),
            TrainCondition::Mix(f) => {
                let nl = self.pure_rate(Condition::Nl, presented, snr);
                let l = self.pure_rate(Condition::L, presented, snr);
                nl + (l - nl) * f
            }
        }
    }
}

impl FrameScorer for StubScorer {
    fn modality(&self) -> Modality {
        self.modality
    }

    fn score(&mut self, input: &EvalInput<'_>) -> Result<Array2<f64>> {
        let mut words = input.meta.words.clone();
        let rate = self.rate(input.presented, input.snr);
        let k = ((rate * words.len() as f64).round() as usize).min(words.len());
        let mut rng = rng_for(self.seed, &[tag("stub"), tag(&input.meta.id)]);
        for idx in sample(&mut rng, words.len(), k) {
            words[idx] = "qzx".to_string();
        }
        let text = words.join(" ");
        Ok(one_hot_frames(&charset::encode(&text), charset::CHARSET_SIZE))
    }
}

/// Evaluation context for one cell.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub test_condition: Condition,
    pub snr: SnrCondition,
    pub decoder: Decoder,
    pub noise: NoiseKind,
    pub roi: RoiSpec,
    pub seed: u64,
}

/// Scores every test utterance recorded under the test condition's source
/// and pools word edits into one cell. Additive noise is derived from
/// (seed, utterance id, SNR) alone, so two models evaluated on the same
/// grid hear bit-identical signals.
pub fn evaluate(
    scorer: &mut dyn FrameScorer,
    corpus: &Corpus,
    test_ids: &[String],
    train_condition: TrainCondition,
    stats: &RmsStats,
    manifest_id: &str,
    cfg: &EvalConfig,
) -> Result<ExperimentCell> {
    let modality = scorer.modality();
    let needs_audio = modality != Modality::Visual;
    let needs_video = modality != Modality::Audio;
    let source = cfg.test_condition.source_recording();

    let mut edits = 0usize;
    let mut n_words = 0usize;
    let mut seen = false;
    for id in test_ids {
        let meta = corpus.get(id)?;
        if meta.condition != source {
            continue;
        }
        seen = true;
        let wave = if needs_audio {
            let clean = prepare_wave(corpus, meta, cfg.test_condition, stats)?;
            let mixed = match cfg.snr {
                SnrCondition::Clean => clean,
                noisy => {
                    let mut rng = rng_for(cfg.seed, &[tag("eval-noise"), tag(id), tag(&noisy.to_string())]);
                    let noise = make_noise(&cfg.noise, clean.len(), &mut rng)?;
                    mix_at_snr(&clean, &noise, noisy)?
                }
            };
            Some(Array1::from_vec(mixed.samples))
        } else {
            None
        };
        let rois = if needs_video {
            Some(crate::video::normalize_sequence(&crate::video::augment_rois(
                &prepare_roi_box(corpus, meta, &cfg.roi)?,
                &cfg.roi,
                crate::video::AugmentMode::Test,
                &mut rng_for(cfg.seed, &[tag("eval-crop"), tag(id)]),
            )?))
        } else {
            None
        };
        let input = EvalInput {
            meta,
            presented: cfg.test_condition,
            snr: cfg.snr,
            wave,
            rois,
        };
        let logps = scorer.score(&input)?;
        let text = charset::decode(&crate::ctc::collapse(&cfg.decoder.decode(&logps)));
        let hypothesis: Vec<&str> = text.split_whitespace().collect();
        edits += word_edit_distance(&meta.words, &hypothesis);
        n_words += meta.words.len();
    }
    if !seen {
        return Err(Error::ConditionAbsent {
            condition: cfg.test_condition.to_string(),
        });
    }

    Ok(ExperimentCell {
        modality,
        view: cfg.roi.view,
        train_condition,
        test_condition: cfg.test_condition,
        snr: cfg.snr,
        wer: edits as f64 / n_words as f64,
        n_words,
        manifest_id: manifest_id.to_string(),
    })
}

/// A scorer plus the provenance the harness stamps into its cells.
pub struct PreparedScorer {
    pub scorer: Box<dyn FrameScorer>,
    pub manifest_id: String,
    pub stats: RmsStats,
}

/// Supplies the model for one grid coordinate; a missing model is an error
/// naming the absent cell.
pub trait ScorerSource {
    fn scorer(
        &mut self,
        modality: Modality,
        view: View,
        train: &TrainCondition,
    ) -> Result<PreparedScorer>;
}

/// Lookup key for trained-checkpoint stores.
pub fn store_key(modality: Modality, view: View, train: &TrainCondition) -> String {
    format!(
        "{}|{}|{}",
        modality_code(modality),
        view_code(view),
        train_label(train)
    )
}

/// Grid source backed by trained checkpoints.
#[derive(Default)]
pub struct CheckpointStore {
    pub checkpoints: BTreeMap<String, Checkpoint>,
}

impl CheckpointStore {
    pub fn insert(&mut self, modality: Modality, view: View, train: &TrainCondition, ck: Checkpoint) {
        self.checkpoints.insert(store_key(modality, view, train), ck);
    }
}

impl ScorerSource for CheckpointStore {
    fn scorer(
        &mut self,
        modality: Modality,
        view: View,
        train: &TrainCondition,
    ) -> Result<PreparedScorer> {
        let key = store_key(modality, view, train);
        let ck = self
            .checkpoints
            .get(&key)
            .ok_or_else(|| Error::MissingCell(key.clone()))?;
        let scorer = NetworkRecognizer::expecting(ck, modality)?;
        let manifest = &ck.meta["manifest"];
        let stats = RmsStats::new(
            manifest["mean_rms_lombard"].as_f64().unwrap_or(0.0),
            manifest["mean_rms_plain"].as_f64().unwrap_or(0.0),
        )
        .map_err(|_| Error::Manifest(format!("checkpoint {key} lacks RMS statistics")))?;
        let manifest_id = ck.meta["manifest_id"].as_str().unwrap_or("unknown").to_string();
        Ok(PreparedScorer {
            scorer: Box::new(scorer),
            manifest_id,
            stats,
        })
    }
}

/// Grid source fabricating [`StubScorer`]s; exercises the full harness
/// without any training.
pub struct StubSource {
    pub seed: u64,
    pub stats: RmsStats,
}

impl ScorerSource for StubSource {
    fn scorer(
        &mut self,
        modality: Modality,
        view: View,
        train: &TrainCondition,
    ) -> Result<PreparedScorer> {
        let key = store_key(modality, view, train);
        Ok(PreparedScorer {
            scorer: Box::new(StubScorer {
                modality,
                train: *train,
                seed: self.seed,
            }),
            manifest_id: format!("stub-{:016x}", tag(&format!("{}|{}", self.seed, key))),
            stats: self.stats,
        })
    }
}

/// Which slice of the experiment matrix to run.
#[derive(Debug, Clone)]
pub struct GridConfig {
    pub modalities: Vec<Modality>,
    /// One video-only table per ROI geometry (frontal, profile).
    pub video_rois: Vec<RoiSpec>,
    /// ROI used by the audio-visual model (and stamped on audio cells).
    pub av_roi: RoiSpec,
    /// Train-test pairs for the audio and audio-visual SNR curves.
    pub av_conditions: Vec<(TrainCondition, Condition)>,
    /// Train-test pairs for the video-only tables.
    pub video_conditions: Vec<(TrainCondition, Condition)>,
    pub snrs: Vec<SnrCondition>,
    pub decoder: Decoder,
    pub noise: NoiseKind,
    pub seed: u64,
}

impl GridConfig {
    /// The reference matrix: {L-L, NL-L, NL-NL, NL-CL} audio and fusion
    /// curves over the eight-level noisy grid, and the three video-only
    /// cells {L-L, NL-L, NL-NL}.
    pub fn standard(seed: u64) -> GridConfig {
        let l = TrainCondition::Pure(Condition::L);
        let nl = TrainCondition::Pure(Condition::Nl);
        GridConfig {
            modalities: vec![Modality::Audio, Modality::Visual, Modality::Av],
            video_rois: vec![RoiSpec::frontal()],
            av_roi: RoiSpec::frontal(),
            av_conditions: vec![
                (l, Condition::L),
                (nl, Condition::L),
                (nl, Condition::Nl),
                (nl, Condition::Cl),
            ],
            video_conditions: vec![(l, Condition::L), (nl, Condition::L), (nl, Condition::Nl)],
            snrs: SNR_GRID_DB
                .iter()
                .map(|&level_db| SnrCondition::Noisy { level_db })
                .collect(),
            decoder: Decoder::Greedy,
            noise: NoiseKind::Babble,
            seed,
        }
    }
}

/// Runs every configured cell: video-only tables at clean SNR per view, and
/// full SNR curves for the audio and audio-visual models.
pub fn run_experiment_grid(
    source: &mut dyn ScorerSource,
    corpus: &Corpus,
    test_ids: &[String],
    cfg: &GridConfig,
) -> Result<ResultTable> {
    let mut table = ResultTable::new();
    if cfg.modalities.contains(&Modality::Visual) {
        for roi in &cfg.video_rois {
            for (train, test) in &cfg.video_conditions {
                let mut prepared = source.scorer(Modality::Visual, roi.view, train)?;
                let ecfg = EvalConfig {
                    test_condition: *test,
                    snr: SnrCondition::Clean,
                    decoder: cfg.decoder,
                    noise: cfg.noise.clone(),
                    roi: *roi,
                    seed: cfg.seed,
                };
                let cell = evaluate(
                    prepared.scorer.as_mut(),
                    corpus,
                    test_ids,
                    *train,
                    &prepared.stats,
                    &prepared.manifest_id,
                    &ecfg,
                )?;
                table.insert(cell)?;
            }
        }
    }
    for modality in [Modality::Audio, Modality::Av] {
        if !cfg.modalities.contains(&modality) {
            continue;
        }
        for (train, test) in &cfg.av_conditions {
            let mut prepared = source.scorer(modality, cfg.av_roi.view, train)?;
            for &snr in &cfg.snrs {
                let ecfg = EvalConfig {
                    test_condition: *test,
                    snr,
                    decoder: cfg.decoder,
                    noise: cfg.noise.clone(),
                    roi: cfg.av_roi,
                    seed: cfg.seed,
                };
                let cell = evaluate(
                    prepared.scorer.as_mut(),
                    corpus,
                    test_ids,
                    *train,
                    &prepared.stats,
                    &prepared.manifest_id,
                    &ecfg,
                )?;
                table.insert(cell)?;
            }
        }
    }
    Ok(table)
}

/// Evaluates one audio-visual model per Lombard training fraction on
/// Lombard test speech across the SNR grid. Fraction 0 trains on exactly
/// the plain set, so it reuses the plain-trained model and its manifest.
pub fn run_fraction_sweep(
    source: &mut dyn ScorerSource,
    corpus: &Corpus,
    test_ids: &[String],
    fractions: &[f64],
    cfg: &GridConfig,
) -> Result<ResultTable> {
    let mut table = ResultTable::new();
    for &fraction in fractions {
        if !(0.0..=1.0).contains(&fraction) || fraction.is_nan() {
            return Err(Error::InvalidFraction(fraction));
        }
        let canonical = if fraction == 0.0 {
            TrainCondition::Pure(Condition::Nl)
        } else {
            TrainCondition::Mix(fraction)
        };
        let mut prepared = source.scorer(Modality::Av, cfg.av_roi.view, &canonical)?;
        for &snr in &cfg.snrs {
            let ecfg = EvalConfig {
                test_condition: Condition::L,
                snr,
                decoder: cfg.decoder,
                noise: cfg.noise.clone(),
                roi: cfg.av_roi,
                seed: cfg.seed,
            };
            let cell = evaluate(
                prepared.scorer.as_mut(),
                corpus,
                test_ids,
                TrainCondition::Mix(fraction),
                &prepared.stats,
                &prepared.manifest_id,
                &ecfg,
            )?;
            table.insert(cell)?;
        }
    }
    Ok(table)
}

/// For each SNR in a fraction sweep, whether WER is non-increasing as the
/// Lombard fraction grows.
pub fn fraction_monotonicity(table: &ResultTable) -> Vec<(SnrCondition, bool)> {
    let mut by_snr: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
    for cell in &table.cells {
        if let TrainCondition::Mix(f) = cell.train_condition {
            by_snr
                .entry(snr_rank(cell.snr))
                .or_default()
                .push((f, cell.wer));
        }
    }
    let mut out = Vec::new();
    for (rank, mut points) in by_snr {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let monotone = points.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12);
        let snr = if rank == i64::MAX {
            SnrCondition::Clean
        } else {
            SnrCondition::Noisy {
                level_db: rank as i32,
            }
        };
        out.push((snr, monotone));
    }
    out
}

const CSV_HEADER: [&str; 8] = [
    "modality",
    "view",
    "train_cond",
    "test_cond",
    "snr_db",
    "wer",
    "n_words",
    "manifest_id",
];

/// Writes one row per cell in stable column and row order.
pub fn write_result_csv(table: &ResultTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(CSV_HEADER)?;
    for cell in table.sorted() {
        w.write_record([
            modality_code(cell.modality).to_string(),
            view_code(cell.view).to_string(),
            train_label(&cell.train_condition),
            cell.test_condition.to_string(),
            cell.snr.to_string(),
            format!("{}", cell.wer),
            format!("{}", cell.n_words),
            cell.manifest_id.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_result_csv(path: &Path) -> Result<ResultTable> {
    let mut r = csv::Reader::from_path(path).map_err(Error::from)?;
    let mut table = ResultTable::new();
    for record in r.records() {
        let record = record?;
        let field = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Parse {
                what: "result CSV row",
                input: record.iter().collect::<Vec<_>>().join(","),
            })
        };
        let wer_text = field(5)?;
        let words_text = field(6)?;
        let cell = ExperimentCell {
            modality: parse_modality_code(field(0)?)?,
            view: parse_view_code(field(1)?)?,
            train_condition: parse_train_label(field(2)?)?,
            test_condition: field(3)?.parse()?,
            snr: field(4)?.parse()?,
            wer: wer_text.parse().map_err(|_| Error::Parse {
                what: "WER value",
                input: wer_text.to_string(),
            })?,
            n_words: words_text.parse().map_err(|_| Error::Parse {
                what: "word count",
                input: words_text.to_string(),
            })?,
            manifest_id: field(7)?.to_string(),
        };
        table.insert(cell)?;
    }
    Ok(table)
}

fn pct(wer: f64) -> String {
    format!("{:.2}", wer * 100.0)
}

/// Fixed-width text tables: video-only cells as a view-by-condition matrix,
/// and one WER-by-SNR matrix per modality group with an SNR axis.
pub fn render_text_summary(table: &ResultTable) -> String {
    let mut out = String::from("WER summary (values in %)\n");
    let cells = table.sorted();

    let video: Vec<&&ExperimentCell> = cells
        .iter()
        .filter(|c| c.modality == Modality::Visual)
        .collect();
    if !video.is_empty() {
        let labels: Vec<String> = dedup(video.iter().map(|c| c.label()));
        let views: Vec<View> = dedup(video.iter().map(|c| c.view));
        out.push_str("\nVideo-only\n");
        out.push_str(&format!("{:<10}", "view"));
        for label in &labels {
            out.push_str(&format!("{label:>12}"));
        }
        out.push('\n');
        for view in views {
            out.push_str(&format!("{:<10}", view_code(view)));
            for label in &labels {
                let text = video
                    .iter()
                    .find(|c| c.view == view && &c.label() == label)
                    .map(|c| pct(c.wer))
                    .unwrap_or_default();
                out.push_str(&format!("{text:>12}"));
            }
            out.push('\n');
        }
    }

    for (modality, title) in [(Modality::Audio, "Audio-only"), (Modality::Av, "Audio-visual")] {
        let group: Vec<&&ExperimentCell> =
            cells.iter().filter(|c| c.modality == modality).collect();
        if group.is_empty() {
            continue;
        }
        let snrs: Vec<SnrCondition> = dedup_sorted(group.iter().map(|c| c.snr), snr_rank);
        let labels: Vec<String> = dedup(group.iter().map(|c| c.label()));
        out.push_str(&format!("\n{title}, WER by SNR (dB)\n"));
        out.push_str(&format!("{:<14}", "train-test"));
        for snr in &snrs {
            out.push_str(&format!("{:>9}", snr.to_string()));
        }
        out.push('\n');
        for label in &labels {
            out.push_str(&format!("{label:<14}"));
            for &snr in &snrs {
                let text = group
                    .iter()
                    .find(|c| &c.label() == label && c.snr == snr)
                    .map(|c| pct(c.wer))
                    .unwrap_or_default();
                out.push_str(&format!("{text:>9}"));
            }
            out.push('\n');
        }
    }
    out
}

fn dedup<T: Clone + PartialEq>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for item in items {
        if !out.contains(&item) {
            out.push(item);
        }
    }
    out
}

fn dedup_sorted<T: Clone + PartialEq>(
    items: impl Iterator<Item = T>,
    rank: impl Fn(T) -> i64,
) -> Vec<T> {
    let mut out = dedup(items);
    out.sort_by_key(|x| rank(x.clone()));
    out
}

/// Emits `results.csv`, `summary.txt` and one `wer_<group>.png` line plot
/// per modality group that has an SNR axis. Returns the written paths.
pub fn emit_report(table: &ResultTable, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if table.cells.is_empty() {
        return Err(Error::EmptyTable);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let csv_path = out_dir.join("results.csv");
    write_result_csv(table, &csv_path)?;
    written.push(csv_path);

    let text_path = out_dir.join("summary.txt");
    std::fs::write(&text_path, render_text_summary(table)).map_err(|e| Error::io(&text_path, e))?;
    written.push(text_path);

    let groups: [(&str, Box<dyn Fn(&ExperimentCell) -> bool>); 3] = [
        (
            "a",
            Box::new(|c: &ExperimentCell| {
                c.modality == Modality::Audio
                    && matches!(c.train_condition, TrainCondition::Pure(_))
            }),
        ),
        (
            "av",
            Box::new(|c: &ExperimentCell| {
                c.modality == Modality::Av && matches!(c.train_condition, TrainCondition::Pure(_))
            }),
        ),
        (
            "fractions",
            Box::new(|c: &ExperimentCell| matches!(c.train_condition, TrainCondition::Mix(_))),
        ),
    ];
    for (name, keep) in groups {
        let cells: Vec<&ExperimentCell> =
            table.sorted().into_iter().filter(|c| keep(c)).collect();
        let snrs: Vec<SnrCondition> = dedup_sorted(cells.iter().map(|c| c.snr), snr_rank);
        if snrs.len() < 2 {
            continue;
        }
        let x_labels: Vec<String> = snrs.iter().map(|s| s.to_string()).collect();
        let labels: Vec<String> = dedup(cells.iter().map(|c| c.label()));
        let series: Vec<(String, Vec<Option<f64>>)> = labels
            .iter()
            .map(|label| {
                let ys = snrs
                    .iter()
                    .map(|&snr| {
                        cells
                            .iter()
                            .find(|c| &c.label() == label && c.snr == snr)
                            .map(|c| c.wer * 100.0)
                    })
                    .collect();
                (label.clone(), ys)
            })
            .collect();
        let title = match name {
            "a" => "Audio-only WER vs SNR",
            "av" => "Audio-visual WER vs SNR",
            _ => "Lombard-fraction WER vs SNR",
        };
        let path = out_dir.join(format!("wer_{name}.png"));
        plot::render_wer_plot(title, &x_labels, &series, &path)?;
        written.push(path);
    }
    Ok(written)
}

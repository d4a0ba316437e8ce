//! Corpus structure: the six-slot sentence grammar, utterance metadata,
//! evaluation splits, and synthetic desk-scale fixture corpora.

mod fixture;

pub use fixture::{synth_fixture_corpus, FixtureSpec};

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, AudioSignal, RmsStats};
use crate::error::{Error, Result};
use crate::video::{read_frame_stack, FrameSequence};

/// Speaking condition. `Nl` and `L` label recordings; `Cl` is Lombard speech
/// presented at plain-speech energy, derived at normalization time rather
/// than recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "NL")]
    Nl,
    L,
    #[serde(rename = "CL")]
    Cl,
}

impl Condition {
    /// The condition of the underlying recording: compensated Lombard plays
    /// back Lombard audio.
    pub fn source_recording(self) -> Condition {
        match self {
            Condition::Nl => Condition::Nl,
            Condition::L | Condition::Cl => Condition::L,
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Condition::Nl => write!(f, "NL"),
            Condition::L => write!(f, "L"),
            Condition::Cl => write!(f, "CL"),
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NL" => Ok(Condition::Nl),
            "L" => Ok(Condition::L),
            "CL" => Ok(Condition::Cl),
            _ => Err(Error::Parse {
                what: "speaking condition",
                input: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Frontal,
    Profile,
}

/// The fixed six-slot sentence grammar: command, colour, preposition,
/// letter, digit, adverb.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceGrammar {
    slots: Vec<Vec<String>>,
}

pub const SLOT_NAMES: [&str; 6] = [
    "command",
    "colour",
    "preposition",
    "letter",
    "digit",
    "adverb",
];

const SLOT_SIZES: [usize; 6] = [4, 4, 4, 25, 10, 4];

impl SentenceGrammar {
    /// The standard inventories: 4 commands, 4 colours, 4 prepositions, 25
    /// letters (a-z without w), 10 spoken digits, 4 adverbs.
    pub fn standard() -> Self {
        let letters: Vec<String> = ('a'..='z')
            .filter(|&c| c != 'w')
            .map(|c| c.to_string())
            .collect();
        let slots = vec![
            vec!["bin", "lay", "place", "set"],
            vec!["blue", "green", "red", "white"],
            vec!["at", "by", "in", "with"],
            letters.iter().map(|s| s.as_str()).collect(),
            vec![
                "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
            ],
            vec!["again", "now", "please", "soon"],
        ]
        .into_iter()
        .map(|v| v.into_iter().map(str::to_string).collect())
        .collect();
        SentenceGrammar::new(slots).expect("standard inventories satisfy slot sizes")
    }

    pub fn new(slots: Vec<Vec<String>>) -> Result<Self> {
        if slots.len() != SLOT_SIZES.len() {
            return Err(Error::Config(format!(
                "grammar needs exactly {} slots, got {}",
                SLOT_SIZES.len(),
                slots.len()
            )));
        }
        for (i, (slot, &want)) in slots.iter().zip(&SLOT_SIZES).enumerate() {
            if slot.len() != want {
                return Err(Error::Config(format!(
                    "slot {} ({}) must hold {} items, got {}",
                    i,
                    SLOT_NAMES[i],
                    want,
                    slot.len()
                )));
            }
            let unique: BTreeSet<&String> = slot.iter().collect();
            if unique.len() != slot.len() {
                return Err(Error::Config(format!(
                    "slot {} ({}) has duplicate items",
                    i, SLOT_NAMES[i]
                )));
            }
        }
        Ok(SentenceGrammar { slots })
    }

    pub fn slots(&self) -> &[Vec<String>] {
        &self.slots
    }

    /// Number of distinct sentences: the product of inventory sizes.
    pub fn sentence_count(&self) -> usize {
        self.slots.iter().map(Vec::len).product()
    }

    /// Draws one word per slot, uniformly and independently.
    pub fn generate_sentence(&self, rng: &mut impl Rng) -> Vec<String> {
        self.slots
            .iter()
            .map(|slot| slot[rng.gen_range(0..slot.len())].clone())
            .collect()
    }

    /// Maps a sentence back to its unique slot-index assignment.
    pub fn slot_indices(&self, words: &[String]) -> Result<[usize; 6]> {
        if words.len() != self.slots.len() {
            return Err(Error::Parse {
                what: "sentence word count",
                input: words.join(" "),
            });
        }
        let mut indices = [0usize; 6];
        for (i, (word, slot)) in words.iter().zip(&self.slots).enumerate() {
            indices[i] = slot.iter().position(|w| w == word).ok_or(Error::Parse {
                what: "word outside its slot inventory",
                input: format!("{} (slot {})", word, SLOT_NAMES[i]),
            })?;
        }
        Ok(indices)
    }

    /// The sentence whose slot indices are all given by `indices`.
    pub fn sentence_at(&self, indices: &[usize; 6]) -> Result<Vec<String>> {
        let mut words = Vec::with_capacity(6);
        for (slot, &idx) in self.slots.iter().zip(indices) {
            let word = slot.get(idx).ok_or(Error::Parse {
                what: "slot index out of range",
                input: idx.to_string(),
            })?;
            words.push(word.clone());
        }
        Ok(words)
    }

    /// Every distinct word across all slots, sorted.
    pub fn vocabulary(&self) -> Vec<String> {
        let set: BTreeSet<String> = self.slots.iter().flatten().cloned().collect();
        set.into_iter().collect()
    }
}

/// Space-joined transcript of a sentence; the letter slot contributes its
/// single character, digits their English word.
pub fn transcript(words: &[String]) -> String {
    words.join(" ")
}

/// One recorded utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMeta {
    pub id: String,
    #[serde(rename = "speaker")]
    pub speaker_id: String,
    pub gender: Gender,
    pub condition: Condition,
    pub view: View,
    pub words: Vec<String>,
    #[serde(rename = "audio")]
    pub audio_ref: String,
    #[serde(rename = "video")]
    pub video_ref: String,
}

impl UtteranceMeta {
    pub fn transcript(&self) -> String {
        transcript(&self.words)
    }
}

/// A corpus: utterance metadata plus the directory its media paths are
/// relative to.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub utterances: Vec<UtteranceMeta>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&UtteranceMeta> {
        self.utterances
            .iter()
            .find(|u| u.id == id)
            .ok_or_else(|| Error::UnknownUtterance(id.to_string()))
    }

    /// Unique speaker ids with genders, sorted by id.
    pub fn speakers(&self) -> Vec<(String, Gender)> {
        let map: BTreeMap<String, Gender> = self
            .utterances
            .iter()
            .map(|u| (u.speaker_id.clone(), u.gender))
            .collect();
        map.into_iter().collect()
    }

    pub fn audio_path(&self, meta: &UtteranceMeta) -> PathBuf {
        self.root.join(&meta.audio_ref)
    }

    pub fn video_path(&self, meta: &UtteranceMeta) -> PathBuf {
        self.root.join(&meta.video_ref)
    }

    pub fn load_audio(&self, meta: &UtteranceMeta) -> Result<AudioSignal> {
        read_wav(&self.audio_path(meta))
    }

    pub fn load_frames(&self, meta: &UtteranceMeta) -> Result<FrameSequence> {
        read_frame_stack(&self.video_path(meta))
    }

    /// Reads a line-delimited manifest; media paths resolve against the
    /// manifest's directory.
    pub fn load_manifest(path: &Path) -> Result<Corpus> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut utterances = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let meta: UtteranceMeta = serde_json::from_str(&line).map_err(|e| {
                Error::Manifest(format!("{}:{}: {}", path.display(), lineno + 1, e))
            })?;
            utterances.push(meta);
        }
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let corpus = Corpus { root, utterances };
        corpus.check_ids()?;
        Ok(corpus)
    }

    pub fn save_manifest(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for meta in &self.utterances {
            let line = serde_json::to_string(meta)?;
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    fn check_ids(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        let mut keys = BTreeSet::new();
        for u in &self.utterances {
            if !ids.insert(&u.id) {
                return Err(Error::Manifest(format!("duplicate utterance id {}", u.id)));
            }
            let key = (u.speaker_id.clone(), u.condition, u.words.join(" "));
            if !keys.insert(key) {
                return Err(Error::Manifest(format!(
                    "duplicate (speaker, condition, sentence) for {}",
                    u.id
                )));
            }
        }
        Ok(())
    }

    /// Full validation: unique ids and keys, words drawn from the grammar,
    /// recordings labelled with a recordable condition.
    pub fn validate(&self, grammar: &SentenceGrammar) -> Result<()> {
        self.check_ids()?;
        for u in &self.utterances {
            grammar.slot_indices(&u.words)?;
            if u.condition == Condition::Cl {
                return Err(Error::Manifest(format!(
                    "utterance {} is labelled CL; recordings are NL or L",
                    u.id
                )));
            }
        }
        Ok(())
    }

    /// Corpus-average RMS per recording condition over the given utterances,
    /// typically the training part of a split.
    pub fn rms_stats(&self, ids: &[String]) -> Result<RmsStats> {
        let mut sums: BTreeMap<Condition, (f64, usize)> = BTreeMap::new();
        for id in ids {
            let meta = self.get(id)?;
            let audio = self.load_audio(meta)?;
            let entry = sums.entry(meta.condition).or_insert((0.0, 0));
            entry.0 += audio.rms();
            entry.1 += 1;
        }
        let mean = |c: Condition| -> Result<f64> {
            let (sum, n) = sums
                .get(&c)
                .ok_or_else(|| Error::MissingCondition(c.to_string()))?;
            Ok(sum / *n as f64)
        };
        RmsStats::new(mean(Condition::L)?, mean(Condition::Nl)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitProtocol {
    MultiSpeaker,
    SubjectIndependent,
}

/// Train/val/test utterance-id partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub protocol: SplitProtocol,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    /// Ratio of Lombard to plain utterance counts in the train part.
    pub lombard_fraction: f64,
}

impl CorpusSplit {
    /// Checks pairwise disjointness, and speaker disjointness under the
    /// subject-independent protocol.
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        let parts = [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ];
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for (name, ids) in &parts {
            for id in ids.iter() {
                corpus.get(id)?;
                if let Some(prev) = seen.insert(id, name) {
                    return Err(Error::Manifest(format!(
                        "utterance {id} appears in both {prev} and {name}"
                    )));
                }
            }
        }
        if self.protocol == SplitProtocol::SubjectIndependent {
            let mut speaker_part: BTreeMap<String, &str> = BTreeMap::new();
            for (name, ids) in &parts {
                for id in ids.iter() {
                    let speaker = corpus.get(id)?.speaker_id.clone();
                    if let Some(prev) = speaker_part.insert(speaker.clone(), name) {
                        if prev != *name {
                            return Err(Error::Manifest(format!(
                                "speaker {speaker} appears in both {prev} and {name}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn compute_lombard_fraction(train: &[String], corpus: &Corpus) -> f64 {
        let mut lombard = 0usize;
        let mut plain = 0usize;
        for id in train {
            match corpus.get(id).map(|u| u.condition) {
                Ok(Condition::L) => lombard += 1,
                Ok(Condition::Nl) => plain += 1,
                _ => {}
            }
        }
        if plain == 0 {
            0.0
        } else {
            lombard as f64 / plain as f64
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<CorpusSplit> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Per-speaker split: every speaker contributes exactly `counts.0` train,
/// `counts.1` val and `counts.2` test utterances, spread as evenly as the
/// data allows over recording conditions.
pub fn make_multi_speaker_split(
    corpus: &Corpus,
    counts: (usize, usize, usize),
    rng: &mut impl Rng,
) -> Result<CorpusSplit> {
    let required = counts.0 + counts.1 + counts.2;
    let mut by_speaker: BTreeMap<String, BTreeMap<Condition, Vec<String>>> = BTreeMap::new();
    for u in &corpus.utterances {
        by_speaker
            .entry(u.speaker_id.clone())
            .or_default()
            .entry(u.condition)
            .or_default()
            .push(u.id.clone());
    }

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (speaker, mut by_cond) in by_speaker {
        let available: usize = by_cond.values().map(Vec::len).sum();
        if available < required {
            return Err(Error::InsufficientUtterances {
                speaker,
                available,
                required,
            });
        }
        for ids in by_cond.values_mut() {
            ids.sort();
            ids.shuffle(rng);
        }
        let conds: Vec<Condition> = by_cond.keys().copied().collect();
        let mut cursors: BTreeMap<Condition, usize> = conds.iter().map(|&c| (c, 0)).collect();
        for (part, want) in [(&mut train, counts.0), (&mut val, counts.1), (&mut test, counts.2)] {
            let mut taken = 0usize;
            // Even quota per condition first, remainder round-robin.
            let base = want / conds.len();
            let extra = want % conds.len();
            for (i, &c) in conds.iter().enumerate() {
                let quota = base + usize::from(i < extra);
                let ids = &by_cond[&c];
                let cursor = cursors.get_mut(&c).unwrap();
                let take = quota.min(ids.len() - *cursor);
                part.extend_from_slice(&ids[*cursor..*cursor + take]);
                *cursor += take;
                taken += take;
            }
            // Conditions that ran short are topped up from the others.
            let mut i = 0;
            while taken < want {
                let c = conds[i % conds.len()];
                let ids = &by_cond[&c];
                let cursor = cursors.get_mut(&c).unwrap();
                if *cursor < ids.len() {
                    part.push(ids[*cursor].clone());
                    *cursor += 1;
                    taken += 1;
                }
                i += 1;
            }
        }
    }

    train.sort();
    val.sort();
    test.sort();
    let lombard_fraction = CorpusSplit::compute_lombard_fraction(&train, corpus);
    let split = CorpusSplit {
        protocol: SplitProtocol::MultiSpeaker,
        train,
        val,
        test,
        lombard_fraction,
    };
    split.validate(corpus)?;
    Ok(split)
}

/// Speaker-disjoint split with the requested number of speakers per part.
/// With `gender_balanced`, the val and test parts each hold equally many
/// female and male speakers.
pub fn make_subject_independent_split(
    corpus: &Corpus,
    speaker_counts: (usize, usize, usize),
    gender_balanced: bool,
    rng: &mut impl Rng,
) -> Result<CorpusSplit> {
    let (n_train, n_val, n_test) = speaker_counts;
    let speakers = corpus.speakers();
    let required = n_train + n_val + n_test;
    if speakers.len() < required {
        return Err(Error::InsufficientSpeakers {
            available: speakers.len(),
            required,
        });
    }

    let mut train_speakers: Vec<String>;
    let mut val_speakers: Vec<String>;
    let mut test_speakers: Vec<String>;
    if gender_balanced {
        for (part, n) in [("val", n_val), ("test", n_test)] {
            if n % 2 != 0 {
                return Err(Error::OddBalancedPart { part, size: n });
            }
        }
        let mut females: Vec<String> = speakers
            .iter()
            .filter(|(_, g)| *g == Gender::Female)
            .map(|(s, _)| s.clone())
            .collect();
        let mut males: Vec<String> = speakers
            .iter()
            .filter(|(_, g)| *g == Gender::Male)
            .map(|(s, _)| s.clone())
            .collect();
        females.shuffle(rng);
        males.shuffle(rng);

        let mut take_balanced = |part: &'static str, n: usize| -> Result<Vec<String>> {
            let half = n / 2;
            for (gender, pool) in [("female", &mut females), ("male", &mut males)] {
                if pool.len() < half {
                    return Err(Error::GenderBalance {
                        part,
                        gender,
                        required: half,
                        available: pool.len(),
                    });
                }
            }
            let mut out: Vec<String> = females.drain(..half).collect();
            out.extend(males.drain(..half));
            Ok(out)
        };
        val_speakers = take_balanced("val", n_val)?;
        test_speakers = take_balanced("test", n_test)?;

        let mut rest: Vec<String> = females.drain(..).chain(males.drain(..)).collect();
        rest.sort();
        rest.shuffle(rng);
        if rest.len() < n_train {
            return Err(Error::InsufficientSpeakers {
                available: rest.len(),
                required: n_train,
            });
        }
        train_speakers = rest.drain(..n_train).collect();
    } else {
        let mut pool: Vec<String> = speakers.iter().map(|(s, _)| s.clone()).collect();
        pool.shuffle(rng);
        train_speakers = pool.drain(..n_train).collect();
        val_speakers = pool.drain(..n_val).collect();
        test_speakers = pool.drain(..n_test).collect();
    }
    train_speakers.sort();
    val_speakers.sort();
    test_speakers.sort();

    let part_of = |spk: &str| -> Option<usize> {
        if train_speakers.binary_search(&spk.to_string()).is_ok() {
            Some(0)
        } else if val_speakers.binary_search(&spk.to_string()).is_ok() {
            Some(1)
        } else if test_speakers.binary_search(&spk.to_string()).is_ok() {
            Some(2)
        } else {
            None
        }
    };
    let mut parts: [Vec<String>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for u in &corpus.utterances {
        if let Some(p) = part_of(&u.speaker_id) {
            parts[p].push(u.id.clone());
        }
    }
    let [mut train, mut val, mut test] = parts;
    train.sort();
    val.sort();
    test.sort();
    let lombard_fraction = CorpusSplit::compute_lombard_fraction(&train, corpus);
    let split = CorpusSplit {
        protocol: SplitProtocol::SubjectIndependent,
        train,
        val,
        test,
        lombard_fraction,
    };
    split.validate(corpus)?;
    Ok(split)
}

/// Rebuilds the train part with all plain utterances plus a random Lombard
/// subset of size `round(fraction * |NL train|)`. Val and test are returned
/// unchanged.
pub fn mix_lombard_fraction(
    split: &CorpusSplit,
    corpus: &Corpus,
    fraction: f64,
    rng: &mut impl Rng,
) -> Result<CorpusSplit> {
    if !(0.0..=1.0).contains(&fraction) || fraction.is_nan() {
        return Err(Error::InvalidFraction(fraction));
    }
    let mut plain = Vec::new();
    let mut lombard = Vec::new();
    for id in &split.train {
        match corpus.get(id)?.condition {
            Condition::Nl => plain.push(id.clone()),
            Condition::L => lombard.push(id.clone()),
            Condition::Cl => {}
        }
    }
    if plain.is_empty() {
        return Err(Error::MissingCondition("NL".to_string()));
    }
    if lombard.is_empty() {
        return Err(Error::MissingCondition("L".to_string()));
    }
    let want = (fraction * plain.len() as f64).round() as usize;
    if lombard.len() < want {
        return Err(Error::InsufficientLombard {
            required: want,
            available: lombard.len(),
        });
    }
    lombard.sort();
    lombard.shuffle(rng);
    let mut train = plain;
    train.extend(lombard.into_iter().take(want));
    train.sort();
    Ok(CorpusSplit {
        protocol: split.protocol,
        train,
        val: split.val.clone(),
        test: split.test.clone(),
        lombard_fraction: fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_corpus(n_speakers: usize, per_condition: usize) -> Corpus {
        // Metadata-only corpus; media refs are never opened in these tests.
        let grammar = SentenceGrammar::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut utterances = Vec::new();
        for s in 0..n_speakers {
            let speaker = format!("s{s:02}");
            let gender = if s % 2 == 0 {
                Gender::Female
            } else {
                Gender::Male
            };
            let mut sentences = BTreeSet::new();
            while sentences.len() < per_condition {
                sentences.insert(grammar.generate_sentence(&mut rng));
            }
            for condition in [Condition::Nl, Condition::L] {
                for (i, words) in sentences.iter().enumerate() {
                    let id = format!("{speaker}_{condition}_{i:03}");
                    utterances.push(UtteranceMeta {
                        id: id.clone(),
                        speaker_id: speaker.clone(),
                        gender,
                        condition,
                        view: View::Frontal,
                        words: words.clone(),
                        audio_ref: format!("audio/{id}.wav"),
                        video_ref: format!("video/{id}.frames"),
                    });
                }
            }
        }
        Corpus {
            root: PathBuf::from("/nonexistent"),
            utterances,
        }
    }

    #[test]
    fn standard_grammar_shape() {
        let g = SentenceGrammar::standard();
        let sizes: Vec<usize> = g.slots().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 4, 25, 10, 4]);
        assert_eq!(g.sentence_count(), 64_000);
        assert!(!g.slots()[3].contains(&"w".to_string()));
        assert_eq!(g.vocabulary().len(), 51);
    }

    #[test]
    fn grammar_rejects_bad_shapes() {
        let mut slots: Vec<Vec<String>> = SentenceGrammar::standard()
            .slots()
            .to_vec();
        slots[0].push("toss".to_string());
        assert!(SentenceGrammar::new(slots).is_err());
        assert!(SentenceGrammar::new(vec![vec!["a".to_string()]]).is_err());
    }

    #[test]
    fn sentence_generation_is_deterministic_and_parses_back() {
        let g = SentenceGrammar::standard();
        let s1 = g.generate_sentence(&mut ChaCha8Rng::seed_from_u64(5));
        let s2 = g.generate_sentence(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(s1, s2);
        let idx = g.slot_indices(&s1).unwrap();
        assert_eq!(g.sentence_at(&idx).unwrap(), s1);
    }

    #[test]
    fn degenerate_indices_give_first_items() {
        let g = SentenceGrammar::standard();
        let words = g.sentence_at(&[0, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!(
            words,
            vec!["bin", "blue", "at", "a", "zero", "again"]
        );
        assert_eq!(transcript(&words), "bin blue at a zero again");
    }

    #[test]
    fn random_sentences_always_parse_uniquely() {
        let g = SentenceGrammar::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..500 {
            let words = g.generate_sentence(&mut rng);
            let idx = g.slot_indices(&words).unwrap();
            assert_eq!(g.sentence_at(&idx).unwrap(), words);
        }
    }

    #[test]
    fn multi_speaker_split_counts_and_disjointness() {
        let corpus = toy_corpus(54, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let split = make_multi_speaker_split(&corpus, (30, 10, 10), &mut rng).unwrap();
        assert_eq!(split.train.len(), 54 * 30);
        assert_eq!(split.val.len(), 54 * 10);
        assert_eq!(split.test.len(), 54 * 10);
        assert_eq!(split.train.len(), 1620);
        split.validate(&corpus).unwrap();
        // Evenly stratified, so the train part mixes conditions 1:1.
        assert!((split.lombard_fraction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn multi_speaker_split_trivial_counts() {
        let corpus = toy_corpus(1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let split = make_multi_speaker_split(&corpus, (0, 0, 1), &mut rng).unwrap();
        assert!(split.train.is_empty());
        assert!(split.val.is_empty());
        assert_eq!(split.test.len(), 1);
    }

    #[test]
    fn multi_speaker_split_insufficient_is_named() {
        let corpus = toy_corpus(2, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = make_multi_speaker_split(&corpus, (81, 10, 10), &mut rng).unwrap_err();
        match err {
            Error::InsufficientUtterances {
                speaker,
                available,
                required,
            } => {
                assert_eq!(speaker, "s00");
                assert_eq!(available, 100);
                assert_eq!(required, 101);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn splits_reproduce_under_fixed_seed() {
        let corpus = toy_corpus(10, 10);
        let a = make_multi_speaker_split(&corpus, (6, 2, 2), &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        let b = make_multi_speaker_split(&corpus, (6, 2, 2), &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        assert_eq!(a, b);
        let c = make_multi_speaker_split(&corpus, (6, 2, 2), &mut ChaCha8Rng::seed_from_u64(10))
            .unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn subject_independent_split_balances_val_and_test() {
        // 30 female + 24 male speakers.
        let mut corpus = toy_corpus(54, 2);
        for u in corpus.utterances.iter_mut() {
            let idx: usize = u.speaker_id[1..].parse().unwrap();
            u.gender = if idx < 30 { Gender::Female } else { Gender::Male };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let split =
            make_subject_independent_split(&corpus, (36, 6, 12), true, &mut rng).unwrap();
        split.validate(&corpus).unwrap();

        let genders = |ids: &[String]| -> (usize, usize) {
            let speakers: BTreeSet<(String, Gender)> = ids
                .iter()
                .map(|id| {
                    let u = corpus.get(id).unwrap();
                    (u.speaker_id.clone(), u.gender)
                })
                .collect();
            let f = speakers.iter().filter(|(_, g)| *g == Gender::Female).count();
            (f, speakers.len() - f)
        };
        assert_eq!(genders(&split.val), (3, 3));
        assert_eq!(genders(&split.test), (6, 6));
        let (train_f, train_m) = genders(&split.train);
        assert_eq!(train_f + train_m, 36);
    }

    #[test]
    fn subject_independent_all_in_test_when_unbalanced() {
        let corpus = toy_corpus(54, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let split =
            make_subject_independent_split(&corpus, (0, 0, 54), false, &mut rng).unwrap();
        assert_eq!(split.test.len(), corpus.len());
        assert!(split.train.is_empty() && split.val.is_empty());
    }

    #[test]
    fn subject_independent_balance_errors() {
        let corpus = toy_corpus(54, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Odd val size cannot balance.
        assert!(matches!(
            make_subject_independent_split(&corpus, (48, 3, 3), true, &mut rng),
            Err(Error::OddBalancedPart { part: "val", .. })
        ));
        // 40 females + 14 males: a balanced 30-speaker test needs 15 males.
        let mut skewed = corpus.clone();
        for u in skewed.utterances.iter_mut() {
            let idx: usize = u.speaker_id[1..].parse().unwrap();
            u.gender = if idx < 40 { Gender::Female } else { Gender::Male };
        }
        let err =
            make_subject_independent_split(&skewed, (0, 0, 30), true, &mut rng).unwrap_err();
        match err {
            Error::GenderBalance {
                part,
                gender,
                required,
                available,
            } => {
                assert_eq!(part, "test");
                assert_eq!(gender, "male");
                assert_eq!(required, 15);
                assert_eq!(available, 14);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn lombard_fraction_mixing() {
        let corpus = toy_corpus(6, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let split = make_multi_speaker_split(&corpus, (12, 4, 4), &mut rng).unwrap();
        let nl_count = split
            .train
            .iter()
            .filter(|id| corpus.get(id).unwrap().condition == Condition::Nl)
            .count();

        for (fraction, expect) in [
            (0.0, 0),
            (0.25, (0.25 * nl_count as f64).round() as usize),
            (1.0, nl_count),
        ] {
            let mixed =
                mix_lombard_fraction(&split, &corpus, fraction, &mut rng).unwrap();
            let l = mixed
                .train
                .iter()
                .filter(|id| corpus.get(id).unwrap().condition == Condition::L)
                .count();
            let nl = mixed.train.len() - l;
            assert_eq!(nl, nl_count, "plain part must be untouched");
            assert_eq!(l, expect, "fraction {fraction}");
            assert_eq!(mixed.val, split.val);
            assert_eq!(mixed.test, split.test);
            assert_eq!(mixed.lombard_fraction, fraction);
        }
    }

    #[test]
    fn lombard_fraction_round_rule() {
        // 1080 plain utterances at fraction 0.25 take exactly 270 Lombard.
        assert_eq!((0.25f64 * 1080.0).round() as usize, 270);
    }

    #[test]
    fn lombard_fraction_rejects_bad_input() {
        let corpus = toy_corpus(4, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let split = make_multi_speaker_split(&corpus, (8, 2, 2), &mut rng).unwrap();
        assert!(matches!(
            mix_lombard_fraction(&split, &corpus, -0.1, &mut rng),
            Err(Error::InvalidFraction(_))
        ));
        assert!(matches!(
            mix_lombard_fraction(&split, &corpus, 1.5, &mut rng),
            Err(Error::InvalidFraction(_))
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let corpus = toy_corpus(2, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        corpus.save_manifest(&path).unwrap();
        let loaded = Corpus::load_manifest(&path).unwrap();
        assert_eq!(loaded.utterances, corpus.utterances);
        assert_eq!(loaded.root, dir.path());
        loaded.validate(&SentenceGrammar::standard()).unwrap();
    }

    #[test]
    fn manifest_rejects_duplicates() {
        let mut corpus = toy_corpus(1, 2);
        let dup = corpus.utterances[0].clone();
        corpus.utterances.push(dup);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        corpus.save_manifest(&path).unwrap();
        assert!(Corpus::load_manifest(&path).is_err());
    }

    #[test]
    fn condition_parse_and_render() {
        for c in [Condition::Nl, Condition::L, Condition::Cl] {
            assert_eq!(c.to_string().parse::<Condition>().unwrap(), c);
        }
        assert!("loud".parse::<Condition>().is_err());
        assert_eq!(Condition::Cl.source_recording(), Condition::L);
        assert_eq!(Condition::Nl.source_recording(), Condition::Nl);
    }
}

//! Desk-scale synthetic corpus: word-keyed harmonic audio and animated
//! mouth-texture video, with a fixed Lombard energy and spectral-tilt
//! offset so condition-matched and mismatched experiments behave like the
//! real thing in miniature.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;

use crate::audio::{write_wav, AudioSignal, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::seeds::{rng_for, tag};
use crate::video::{synthetic_face_layout, write_frame_stack, FrameSequence, VIDEO_FPS};

use super::{Condition, Corpus, Gender, SentenceGrammar, UtteranceMeta, View};

/// Video frames per word in fixture utterances.
pub const WORD_FRAMES: usize = 8;
/// Fixture frame height.
pub const FIXTURE_FRAME_H: usize = 80;
/// Fixture frame width.
pub const FIXTURE_FRAME_W: usize = 100;

/// Audio samples per video frame at 16 kHz / 25 fps.
const SAMPLES_PER_FRAME: usize = SAMPLE_RATE_HZ as usize / VIDEO_FPS as usize;

/// Energy offset of the Lombard condition, in dB.
const LOMBARD_GAIN_DB: f64 = 4.0;
/// Extra gain on the upper harmonic under the Lombard condition, modelling
/// the flattened spectral tilt of loud speech.
const LOMBARD_TREBLE_FACTOR: f64 = 1.35;

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub n_speakers: usize,
    pub utt_per_condition: usize,
    pub seed: u64,
    pub view: View,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            n_speakers: 2,
            utt_per_condition: 3,
            seed: 0,
            view: View::Frontal,
        }
    }
}

/// Per-speaker voice character: a small detune and a treble weighting.
struct Voice {
    detune_hz: f64,
    treble: f64,
}

impl Voice {
    fn for_speaker(seed: u64, speaker_idx: usize) -> Voice {
        let mut rng = rng_for(seed, &[tag("voice"), speaker_idx as u64]);
        Voice {
            detune_hz: rng.gen_range(-5.0..5.0),
            treble: rng.gen_range(0.8..1.2),
        }
    }
}

/// Fundamental and upper-harmonic frequencies keyed to a vocabulary index.
fn word_tones(word_idx: usize) -> (f64, f64) {
    let f1 = 220.0 + 28.0 * word_idx as f64;
    let f2 = 2200.0 + 36.0 * word_idx as f64;
    (f1, f2)
}

fn synth_audio(
    word_indices: &[usize],
    condition: Condition,
    voice: &Voice,
    rng: &mut impl Rng,
) -> AudioSignal {
    let word_samples = WORD_FRAMES * SAMPLES_PER_FRAME;
    let n = word_indices.len() * word_samples;
    let mut samples = vec![0.0f64; n];
    let fs = SAMPLE_RATE_HZ as f64;
    let jitter_hz: f64 = rng.gen_range(-1.0..1.0);
    let (energy, treble) = match condition.source_recording() {
        Condition::L => (10f64.powf(LOMBARD_GAIN_DB / 20.0), LOMBARD_TREBLE_FACTOR),
        _ => (1.0, 1.0),
    };
    let ramp = 320usize;
    for (w, &word_idx) in word_indices.iter().enumerate() {
        let (f1, f2) = word_tones(word_idx);
        let f1 = f1 + voice.detune_hz + jitter_hz;
        let f2 = f2 + voice.detune_hz + jitter_hz;
        for i in 0..word_samples {
            let t = i as f64 / fs;
            let envelope = if i < ramp {
                0.5 - 0.5 * (std::f64::consts::PI * i as f64 / ramp as f64).cos()
            } else if i >= word_samples - ramp {
                let j = word_samples - 1 - i;
                0.5 - 0.5 * (std::f64::consts::PI * j as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            let tone = 0.30 * (2.0 * std::f64::consts::PI * f1 * t).sin()
                + 0.18 * voice.treble * treble * (2.0 * std::f64::consts::PI * f2 * t).sin();
            samples[w * word_samples + i] = energy * envelope * tone;
        }
    }
    for s in samples.iter_mut() {
        *s += rng.gen_range(-0.01..0.01);
    }
    AudioSignal::new(samples).expect("fixture audio is non-empty and finite")
}

fn synth_video(
    word_indices: &[usize],
    speaker_idx: usize,
    rng: &mut impl Rng,
) -> FrameSequence {
    let h = FIXTURE_FRAME_H;
    let w = FIXTURE_FRAME_W;
    let n_frames = word_indices.len() * WORD_FRAMES;
    let mut seq = FrameSequence::new(h, w, n_frames);
    let layout = synthetic_face_layout(h, w);
    let mouth = layout.mouth_center();
    let speaker_shade = (speaker_idx % 7) as i32 * 4;

    for t in 0..n_frames {
        let word_idx = word_indices[t / WORD_FRAMES];
        let phase = (t % WORD_FRAMES) as f64 / WORD_FRAMES as f64;
        let kx = 1.0 + (word_idx % 5) as f64;
        let ky = 1.0 + ((word_idx / 5) % 5) as f64;
        for y in 0..h {
            for x in 0..w {
                // Static face on a dark background.
                let mut value: i32 = if y >= h / 5 && y < h * 19 / 20 && x >= w / 5 && x < w * 4 / 5
                {
                    90 + speaker_shade
                } else {
                    40
                };
                // Eye corners and nose tip as dark markers.
                for p in [
                    layout.eye_outer_left,
                    layout.eye_inner_left,
                    layout.eye_inner_right,
                    layout.eye_outer_right,
                    layout.nose_tip,
                ] {
                    if (y as f64 - p.y).abs() <= 1.0 && (x as f64 - p.x).abs() <= 1.0 {
                        value = 10;
                    }
                }
                // Animated word-keyed grating over the mouth region.
                let my = y as f64 - mouth.y;
                let mx = x as f64 - mouth.x;
                if my.abs() < 8.0 && mx.abs() < 16.0 {
                    let arg = 2.0 * std::f64::consts::PI
                        * ((kx * mx + ky * my) / 16.0 + phase);
                    value = 128 + (90.0 * arg.sin()) as i32;
                }
                value += rng.gen_range(-6..=6);
                seq.set(t, y, x, value.clamp(0, 255) as u8);
            }
        }
    }
    seq
}

/// Builds a complete synthetic corpus under `dir`: waveforms, frame stacks
/// and a manifest. Identical (spec, grammar) inputs yield byte-identical
/// output trees.
pub fn synth_fixture_corpus(
    dir: &Path,
    spec: &FixtureSpec,
    grammar: &SentenceGrammar,
) -> Result<Corpus> {
    if spec.n_speakers == 0 {
        return Err(Error::Config("fixture needs at least one speaker".into()));
    }
    if spec.utt_per_condition == 0 {
        return Err(Error::Config(
            "fixture needs at least one utterance per condition".into(),
        ));
    }
    std::fs::create_dir_all(dir.join("audio")).map_err(|e| Error::io(dir, e))?;
    std::fs::create_dir_all(dir.join("video")).map_err(|e| Error::io(dir, e))?;

    let vocabulary = grammar.vocabulary();
    let word_index = |word: &str| -> usize {
        vocabulary
            .binary_search_by(|v| v.as_str().cmp(word))
            .expect("sentence words come from the grammar")
    };

    let mut utterances = Vec::new();
    for s in 0..spec.n_speakers {
        let speaker = format!("spk{s:02}");
        let gender = if s % 2 == 0 {
            Gender::Female
        } else {
            Gender::Male
        };
        let voice = Voice::for_speaker(spec.seed, s);

        // L and NL share each speaker's sentence set, mirroring a speaker
        // reading the same prompts under both conditions.
        let mut sentence_rng = rng_for(spec.seed, &[tag("sentences"), s as u64]);
        let mut sentences = BTreeSet::new();
        while sentences.len() < spec.utt_per_condition {
            sentences.insert(grammar.generate_sentence(&mut sentence_rng));
        }

        for condition in [Condition::Nl, Condition::L] {
            let cond_tag = match condition {
                Condition::Nl => 0u64,
                Condition::L => 1,
                Condition::Cl => unreachable!("fixtures record NL and L only"),
            };
            for (i, words) in sentences.iter().enumerate() {
                let id = format!("{speaker}_{condition}_{i:03}");
                let indices: Vec<usize> =
                    words.iter().map(|word| word_index(word)).collect();

                let mut utt_rng =
                    rng_for(spec.seed, &[tag("utterance"), s as u64, cond_tag, i as u64]);
                let audio = synth_audio(&indices, condition, &voice, &mut utt_rng);
                let video = synth_video(&indices, s, &mut utt_rng);

                let audio_ref = format!("audio/{id}.wav");
                let video_ref = format!("video/{id}.frames");
                write_wav(&dir.join(&audio_ref), &audio)?;
                write_frame_stack(&dir.join(&video_ref), &video)?;

                utterances.push(UtteranceMeta {
                    id,
                    speaker_id: speaker.clone(),
                    gender,
                    condition,
                    view: spec.view,
                    words: words.clone(),
                    audio_ref,
                    video_ref,
                });
            }
        }
    }

    let corpus = Corpus {
        root: dir.to_path_buf(),
        utterances,
    };
    corpus.save_manifest(&dir.join("manifest.jsonl"))?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{transcript, Condition};

    fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            let mut entries: Vec<_> = std::fs::read_dir(&d)
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            entries.sort();
            for p in entries {
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(dir).unwrap().display().to_string();
                    out.push((rel, std::fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn counts_and_validity() {
        let dir = tempfile::tempdir().unwrap();
        let grammar = SentenceGrammar::standard();
        let spec = FixtureSpec {
            n_speakers: 8,
            utt_per_condition: 10,
            seed: 5,
            view: View::Frontal,
        };
        let corpus = synth_fixture_corpus(dir.path(), &spec, &grammar).unwrap();
        assert_eq!(corpus.len(), 160);
        let l = corpus
            .utterances
            .iter()
            .filter(|u| u.condition == Condition::L)
            .count();
        assert_eq!(l, 80);
        corpus.validate(&grammar).unwrap();

        let meta = &corpus.utterances[0];
        let audio = corpus.load_audio(meta).unwrap();
        assert_eq!(audio.len(), 6 * WORD_FRAMES * SAMPLES_PER_FRAME);
        let frames = corpus.load_frames(meta).unwrap();
        assert_eq!(frames.n_frames(), 6 * WORD_FRAMES);
        assert_eq!(frames.height, FIXTURE_FRAME_H);
        assert_eq!(frames.width, FIXTURE_FRAME_W);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let grammar = SentenceGrammar::standard();
        let spec = FixtureSpec {
            n_speakers: 2,
            utt_per_condition: 2,
            seed: 9,
            view: View::Frontal,
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        synth_fixture_corpus(d1.path(), &spec, &grammar).unwrap();
        synth_fixture_corpus(d2.path(), &spec, &grammar).unwrap();
        assert_eq!(read_tree(d1.path()), read_tree(d2.path()));

        let d3 = tempfile::tempdir().unwrap();
        let other = FixtureSpec { seed: 10, ..spec };
        synth_fixture_corpus(d3.path(), &other, &grammar).unwrap();
        assert_ne!(read_tree(d1.path()), read_tree(d3.path()));
    }

    #[test]
    fn lombard_fixtures_are_louder_on_average() {
        let dir = tempfile::tempdir().unwrap();
        let grammar = SentenceGrammar::standard();
        let spec = FixtureSpec {
            n_speakers: 3,
            utt_per_condition: 4,
            seed: 31,
            view: View::Frontal,
        };
        let corpus = synth_fixture_corpus(dir.path(), &spec, &grammar).unwrap();
        let mean_rms = |cond: Condition| -> f64 {
            let rms: Vec<f64> = corpus
                .utterances
                .iter()
                .filter(|u| u.condition == cond)
                .map(|u| corpus.load_audio(u).unwrap().rms())
                .collect();
            rms.iter().sum::<f64>() / rms.len() as f64
        };
        assert!(mean_rms(Condition::L) > mean_rms(Condition::Nl));
    }

    #[test]
    fn conditions_share_sentences_per_speaker() {
        let dir = tempfile::tempdir().unwrap();
        let grammar = SentenceGrammar::standard();
        let corpus =
            synth_fixture_corpus(dir.path(), &FixtureSpec::default(), &grammar).unwrap();
        let sentences = |cond: Condition| -> BTreeSet<String> {
            corpus
                .utterances
                .iter()
                .filter(|u| u.speaker_id == "spk00" && u.condition == cond)
                .map(|u| transcript(&u.words))
                .collect()
        };
        assert_eq!(sentences(Condition::Nl), sentences(Condition::L));
    }
}

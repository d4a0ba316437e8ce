//! Command-line front end: fixture synthesis, split generation, waveform
//! conditioning, the phased training pipeline and the evaluation harness.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use lombard_avsr::audio::{
    make_noise, mix_at_snr, normalize_condition, read_wav, write_wav, NoiseKind, RmsStats,
    SnrCondition,
};
use lombard_avsr::corpus::{
    make_multi_speaker_split, make_subject_independent_split, mix_lombard_fraction, Condition,
    Corpus, CorpusSplit, FixtureSpec, SentenceGrammar, SplitProtocol, View,
};
use lombard_avsr::error::{Error, Result};
use lombard_avsr::eval::{
    emit_report, evaluate, parse_modality_code, parse_view_code, read_result_csv,
    render_text_summary, run_experiment_grid, run_fraction_sweep, fraction_monotonicity, Decoder,
    EvalConfig, GridConfig, CheckpointStore, ResultTable, ScorerSource, StubSource,
};
use lombard_avsr::model::{AudioModel, Checkpoint, ModelConfig, VisualModel};
use lombard_avsr::seeds::{rng_for, tag};
use lombard_avsr::training::{
    finetune_model, fusion_model, resume_phase, run_full_pipeline, train_phase, Conditioning,
    Phase, PhaseModel, PhaseSchedules, PipelineConfig, SnrMode, TrainCondition, TrainOutcome,
    TrainSchedule,
};
use lombard_avsr::video::RoiSpec;

#[derive(Parser)]
#[command(
    name = "avsr",
    about = "Audio-visual speech recognition under the Lombard effect",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a desk-scale fixture corpus with L/NL recordings.
    SynthFixture(SynthFixtureArgs),
    /// Generate a train/val/test split from a corpus manifest.
    Split(SplitArgs),
    /// Normalize a waveform to a presentation condition and add noise.
    Condition(ConditionArgs),
    /// Train one phase, or the full audio/visual/fusion/finetune pipeline.
    Train(TrainArgs),
    /// Score a checkpoint on one test condition and SNR.
    Evaluate(EvaluateArgs),
    /// Run the matched/mismatched condition grid from a config file.
    Grid(HarnessArgs),
    /// Run the Lombard-fraction sweep from a config file.
    Sweep(SweepArgs),
    /// Render a results CSV into text and plots.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthFixtureArgs {
    /// Directory for media and manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    speakers: usize,
    /// Utterances per speaker per condition.
    #[arg(long, default_value_t = 2)]
    utt_per_condition: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Camera view recorded in the metadata: frontal or profile.
    #[arg(long, default_value = "frontal")]
    view: String,
}

#[derive(Args)]
struct SplitArgs {
    /// Corpus manifest (one record per line).
    #[arg(long)]
    manifest: PathBuf,
    /// Output split file.
    #[arg(long)]
    out: PathBuf,
    /// multi-speaker or subject-independent.
    #[arg(long, default_value = "multi-speaker")]
    protocol: String,
    /// train,val,test counts: utterances per speaker (spread evenly over
    /// conditions) for multi-speaker, speaker counts for subject-independent.
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    /// Balance genders across the subject-independent speaker sets.
    #[arg(long)]
    gender_balanced: bool,
    /// Resample the train part to this Lombard share.
    #[arg(long)]
    lombard_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ConditionArgs {
    /// Input waveform (16 kHz mono).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// clean or a grid level in -15..6.
    #[arg(long, default_value = "clean", allow_hyphen_values = true)]
    snr: SnrCondition,
    /// babble, speech_shaped or file:PATH.
    #[arg(long, default_value = "babble")]
    noise: NoiseKind,
    /// Presentation condition: NL, L or CL.
    #[arg(long, default_value = "NL")]
    condition: Condition,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean training-set RMS of Lombard recordings.
    #[arg(long, default_value_t = 0.05)]
    rms_lombard: f64,
    /// Mean training-set RMS of plain recordings.
    #[arg(long, default_value_t = 0.05)]
    rms_plain: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// audio, visual, fusion, finetune or all.
    #[arg(long)]
    phase: String,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Model configuration file; defaults to the full-scale architecture.
    #[arg(long, conflicts_with = "tiny")]
    config: Option<PathBuf>,
    /// Use the desk-scale architecture.
    #[arg(long)]
    tiny: bool,
    /// Training condition: NL, L, CL or mix:FRACTION.
    #[arg(long, default_value = "NL")]
    condition: TrainCondition,
    /// specific:DB (or specific:clean) or augmented.
    #[arg(long, default_value = "augmented")]
    snr_mode: SnrMode,
    #[arg(long, default_value = "babble")]
    noise: NoiseKind,
    /// Mouth ROI geometry: standard or fixture.
    #[arg(long, default_value = "standard")]
    roi: String,
    /// Camera view the ROI geometry is built for.
    #[arg(long, default_value = "frontal")]
    view: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the phase default epoch budget.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Directory checkpoints are written into.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Pretrained audio stream (fusion phase).
    #[arg(long)]
    audio_checkpoint: Option<PathBuf>,
    /// Pretrained visual stream (fusion phase).
    #[arg(long)]
    visual_checkpoint: Option<PathBuf>,
    /// Frozen-stream fusion checkpoint (finetune phase).
    #[arg(long)]
    fusion_checkpoint: Option<PathBuf>,
    /// Continue a single-phase run from its checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Split file; the test part is scored.
    #[arg(long)]
    split: PathBuf,
    /// L, NL or CL.
    #[arg(long)]
    test_condition: Condition,
    #[arg(long, default_value = "clean", allow_hyphen_values = true)]
    snr: SnrCondition,
    /// greedy or beam:WIDTH.
    #[arg(long, default_value = "greedy")]
    decoder: Decoder,
    #[arg(long, default_value = "babble")]
    noise: NoiseKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Append the cell to a results CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HarnessArgs {
    /// Harness config file.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Lombard shares of the training set, e.g. 0,0.25,0.5,1.0.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 1.0])]
    fractions: Vec<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results CSV produced by evaluate, grid or sweep.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// On-disk harness configuration shared by `grid` and `sweep`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HarnessFile {
    manifest: PathBuf,
    split: PathBuf,
    out_dir: PathBuf,
    seed: u64,
    /// Score with deterministic stub recognizers instead of checkpoints.
    #[serde(default)]
    stub: bool,
    #[serde(default)]
    decoder: Option<String>,
    #[serde(default)]
    noise: Option<String>,
    /// SNR axis in dB; defaults to the full -15..6 grid.
    #[serde(default)]
    snrs: Option<Vec<i32>>,
    /// Modality codes: A, V, AV.
    #[serde(default)]
    modalities: Option<Vec<String>>,
    /// Views the video-only table is run for.
    #[serde(default)]
    views: Option<Vec<String>>,
    /// ROI geometry preset: standard or fixture.
    #[serde(default)]
    roi: Option<String>,
    #[serde(default)]
    av_pairs: Option<Vec<PairEntry>>,
    #[serde(default)]
    video_pairs: Option<Vec<PairEntry>>,
    #[serde(default)]
    checkpoints: Vec<CheckpointEntry>,
}

#[derive(Deserialize)]
struct PairEntry {
    train: String,
    test: String,
}

#[derive(Deserialize)]
struct CheckpointEntry {
    modality: String,
    view: String,
    train: String,
    path: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthFixture(args) => synth_fixture(args),
        Command::Split(args) => split(args),
        Command::Condition(args) => condition(args),
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::Grid(args) => grid(args),
        Command::Sweep(args) => sweep(args),
        Command::Report(args) => report(args),
    }
}

fn parse_view(s: &str) -> Result<View> {
    parse_view_code(s)
}

fn roi_preset(name: &str, view: View) -> Result<RoiSpec> {
    match name {
        "standard" => Ok(RoiSpec::for_view(view)),
        "fixture" => RoiSpec::new(view, 40, 32, 36, 28),
        other => Err(Error::Parse {
            what: "ROI preset",
            input: other.to_string(),
        }),
    }
}

fn synth_fixture(args: SynthFixtureArgs) -> Result<()> {
    let spec = FixtureSpec {
        n_speakers: args.speakers,
        utt_per_condition: args.utt_per_condition,
        seed: args.seed,
        view: parse_view(&args.view)?,
    };
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let corpus = lombard_avsr::corpus::synth_fixture_corpus(
        &args.out,
        &spec,
        &SentenceGrammar::standard(),
    )?;
    println!(
        "wrote {} utterances ({} speakers x {} per condition x 2 conditions)",
        corpus.len(),
        args.speakers,
        args.utt_per_condition
    );
    println!("manifest: {}", args.out.join("manifest.jsonl").display());
    Ok(())
}

fn triple(counts: &Option<Vec<usize>>, default: [usize; 3]) -> Result<(usize, usize, usize)> {
    match counts {
        None => Ok((default[0], default[1], default[2])),
        Some(c) if c.len() == 3 => Ok((c[0], c[1], c[2])),
        Some(c) => Err(Error::Parse {
            what: "train,val,test counts",
            input: c.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
        }),
    }
}

fn split(args: SplitArgs) -> Result<()> {
    let corpus = Corpus::load_manifest(&args.manifest)?;
    let mut rng = rng_for(args.seed, &[tag("split")]);
    let mut split = match args.protocol.as_str() {
        "multi-speaker" => {
            let c = triple(&args.counts, [60, 20, 20])?;
            make_multi_speaker_split(&corpus, c, &mut rng)?
        }
        "subject-independent" => {
            let c = triple(&args.counts, [36, 6, 12])?;
            make_subject_independent_split(&corpus, c, args.gender_balanced, &mut rng)?
        }
        other => {
            return Err(Error::Parse {
                what: "split protocol",
                input: other.to_string(),
            })
        }
    };
    if let Some(fraction) = args.lombard_fraction {
        split = mix_lombard_fraction(&split, &corpus, fraction, &mut rng)?;
    }
    split.validate(&corpus)?;
    split.save(&args.out)?;
    println!(
        "split {}: train/val/test = {}/{}/{} utterances (L:NL ratio {:.2})",
        match split.protocol {
            SplitProtocol::MultiSpeaker => "multi-speaker",
            SplitProtocol::SubjectIndependent => "subject-independent",
        },
        split.train.len(),
        split.val.len(),
        split.test.len(),
        split.lombard_fraction
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn condition(args: ConditionArgs) -> Result<()> {
    let signal = read_wav(&args.input)?;
    let stats = RmsStats::new(args.rms_lombard, args.rms_plain)?;
    let mut presented = normalize_condition(&signal, args.condition, &stats)?;
    if let SnrCondition::Noisy { .. } = args.snr {
        let mut rng = rng_for(args.seed, &[tag("condition")]);
        let noise = make_noise(&args.noise, presented.len(), &mut rng)?;
        presented = mix_at_snr(&presented, &noise, args.snr)?;
    }
    write_wav(&args.out, &presented)?;
    println!(
        "wrote {} ({} samples, {} at {})",
        args.out.display(),
        presented.len(),
        args.condition,
        args.snr
    );
    Ok(())
}

fn model_config(args: &TrainArgs) -> Result<ModelConfig> {
    let config = if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    } else if args.tiny {
        ModelConfig::tiny()
    } else {
        ModelConfig::full()
    };
    config.validate()?;
    Ok(config)
}

fn print_history(outcome: &TrainOutcome) {
    let n = outcome.history.len();
    for (i, e) in outcome.history.iter().enumerate() {
        if n > 24 && i % 10 != 0 && i + 1 != n {
            continue;
        }
        println!(
            "  epoch {:>3}: train {:.4}  val {:.4}  lr {:.2e}{}",
            e.epoch,
            e.train_loss,
            e.val_loss,
            e.lr,
            if e.skipped > 0 {
                format!("  ({} unreachable)", e.skipped)
            } else {
                String::new()
            }
        );
    }
}

fn save_outcome(outcome: &TrainOutcome, phase: Phase, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join(format!("{phase}.ckpt"));
    outcome.checkpoint.save(&path)?;
    println!(
        "[{phase}] {} epochs, best val {:.4} at epoch {}, manifest {}",
        outcome.history.len(),
        outcome
            .checkpoint
            .meta
            .get("best_val_loss")
            .and_then(|v| v.as_f64())
            .unwrap_or(f64::NAN),
        outcome
            .checkpoint
            .meta
            .get("best_epoch")
            .and_then(|v| v.as_u64())
            .unwrap_or(0),
        outcome.manifest.id()
    );
    print_history(outcome);
    println!("checkpoint: {}", path.display());
    Ok(path)
}

fn train(args: TrainArgs) -> Result<()> {
    let config = model_config(&args)?;
    let corpus = Corpus::load_manifest(&args.manifest)?;
    let split = CorpusSplit::load(&args.split)?;
    split.validate(&corpus)?;
    let roi = roi_preset(&args.roi, parse_view(&args.view)?)?;
    let conditioning = Conditioning::new(args.condition, args.snr_mode, args.noise.clone(), roi);

    if args.phase == "all" {
        let mut schedules = PhaseSchedules::defaults(args.seed);
        for schedule in [
            &mut schedules.audio,
            &mut schedules.visual,
            &mut schedules.fusion,
            &mut schedules.finetune,
        ] {
            if let Some(e) = args.epochs {
                schedule.epochs = e;
            }
            if let Some(b) = args.batch_size {
                schedule.batch_size = b;
            }
            if let Some(lr) = args.lr {
                schedule.learning_rate = lr;
            }
        }
        let pipeline = PipelineConfig {
            model: config,
            condition: args.condition,
            noise: args.noise.clone(),
            snr_mode: args.snr_mode,
            roi,
            seed: args.seed,
            schedules,
        };
        let artifacts = run_full_pipeline(&corpus, &split, &pipeline)?;
        std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
        for (name, ck) in [
            ("audio", &artifacts.audio),
            ("visual", &artifacts.visual),
            ("fusion", &artifacts.fusion),
            ("av", &artifacts.av),
        ] {
            let path = args.out.join(format!("{name}.ckpt"));
            ck.save(&path)?;
            println!("[{name}] checkpoint: {}", path.display());
        }
        for manifest in &artifacts.manifests {
            println!("[{}] manifest {}", manifest.phase, manifest.id());
        }
        return Ok(());
    }

    let phase: Phase = args.phase.parse()?;
    let mut schedule = TrainSchedule::defaults(phase, args.seed);
    if let Some(e) = args.epochs {
        schedule.epochs = e;
    }
    if let Some(b) = args.batch_size {
        schedule.batch_size = b;
    }
    if let Some(lr) = args.lr {
        schedule.learning_rate = lr;
    }

    let outcome = if let Some(resume_path) = &args.resume {
        let ck = Checkpoint::load(resume_path)?;
        resume_phase(&ck, &corpus, &split, &conditioning, &schedule)?
    } else {
        let model = match phase {
            Phase::Audio => PhaseModel::Audio(AudioModel::new(
                &config,
                &mut rng_for(schedule.seed, &[tag("init"), 0]),
            )),
            Phase::Visual => PhaseModel::Visual(VisualModel::new(
                &config,
                &mut rng_for(schedule.seed, &[tag("init"), 1]),
            )),
            Phase::Fusion => {
                let audio_ck = load_required(&args.audio_checkpoint, "fusion", "audio")?;
                let visual_ck = load_required(&args.visual_checkpoint, "fusion", "visual")?;
                PhaseModel::Av {
                    model: fusion_model(&config, &audio_ck, &visual_ck, schedule.seed)?,
                    freeze_streams: true,
                }
            }
            Phase::Finetune => {
                let fusion_ck = load_required(&args.fusion_checkpoint, "finetune", "fusion")?;
                PhaseModel::Av {
                    model: finetune_model(&config, &fusion_ck)?,
                    freeze_streams: false,
                }
            }
        };
        train_phase(model, &config, &corpus, &split, &conditioning, &schedule)?
    };
    save_outcome(&outcome, phase, &args.out)?;
    Ok(())
}

fn load_required(path: &Option<PathBuf>, phase: &str, missing: &str) -> Result<Checkpoint> {
    match path {
        Some(p) => Checkpoint::load(p),
        None => Err(Error::MissingPhaseCheckpoint {
            phase: phase.to_string(),
            missing: missing.to_string(),
        }),
    }
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let corpus = Corpus::load_manifest(&args.manifest)?;
    let split = CorpusSplit::load(&args.split)?;
    if split.test.is_empty() {
        return Err(Error::Config("split has no test utterances".into()));
    }
    let ck = Checkpoint::load(&args.checkpoint)?;
    let manifest = ck
        .meta
        .get("manifest")
        .cloned()
        .ok_or_else(|| Error::CheckpointFormat("checkpoint carries no run manifest".into()))?;
    let train: TrainCondition = manifest["condition"]
        .as_str()
        .ok_or_else(|| Error::CheckpointFormat("manifest lacks a train condition".into()))?
        .parse()?;
    let roi: RoiSpec = serde_json::from_value(manifest["roi"].clone())
        .map_err(|e| Error::CheckpointFormat(format!("manifest ROI: {e}")))?;
    let modality = ck.modality;

    let mut store = CheckpointStore::default();
    store.insert(modality, roi.view, &train, ck);
    let prepared = store.scorer(modality, roi.view, &train)?;
    let cfg = EvalConfig {
        test_condition: args.test_condition,
        snr: args.snr,
        decoder: args.decoder,
        noise: args.noise,
        roi,
        seed: args.seed,
    };
    let mut scorer = prepared.scorer;
    let cell = evaluate(
        scorer.as_mut(),
        &corpus,
        &split.test,
        train,
        &prepared.stats,
        &prepared.manifest_id,
        &cfg,
    )?;
    println!(
        "{} {} {} @ {}: WER {:.2}% over {} words (manifest {})",
        lombard_avsr::eval::modality_code(cell.modality),
        lombard_avsr::eval::view_code(cell.view),
        cell.label(),
        cell.snr,
        cell.wer * 100.0,
        cell.n_words,
        cell.manifest_id
    );
    if let Some(out) = &args.out {
        let mut table = if out.exists() {
            read_result_csv(out)?
        } else {
            ResultTable::new()
        };
        table.insert(cell)?;
        lombard_avsr::eval::write_result_csv(&table, out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

/// Loads the harness file and assembles the corpus, test ids, grid
/// configuration and scorer source it describes.
fn load_harness(
    path: &Path,
) -> Result<(Corpus, Vec<String>, GridConfig, Box<dyn ScorerSource>, PathBuf)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: HarnessFile =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;

    let corpus = Corpus::load_manifest(&file.manifest)?;
    let split = CorpusSplit::load(&file.split)?;
    if split.test.is_empty() {
        return Err(Error::Config("split has no test utterances".into()));
    }

    let mut cfg = GridConfig::standard(file.seed);
    if let Some(d) = &file.decoder {
        cfg.decoder = d.parse()?;
    }
    if let Some(n) = &file.noise {
        cfg.noise = n.parse()?;
    }
    if let Some(snrs) = &file.snrs {
        cfg.snrs = snrs
            .iter()
            .map(|&db| SnrCondition::noisy(db))
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(codes) = &file.modalities {
        cfg.modalities = codes
            .iter()
            .map(|c| parse_modality_code(c))
            .collect::<Result<Vec<_>>>()?;
    }
    let preset = file.roi.as_deref().unwrap_or("standard");
    let views = match &file.views {
        Some(views) => views
            .iter()
            .map(|v| parse_view(v))
            .collect::<Result<Vec<_>>>()?,
        None => vec![View::Frontal],
    };
    cfg.video_rois = views
        .iter()
        .map(|&v| roi_preset(preset, v))
        .collect::<Result<Vec<_>>>()?;
    cfg.av_roi = roi_preset(preset, views[0])?;
    if let Some(pairs) = &file.av_pairs {
        cfg.av_conditions = parse_pairs(pairs)?;
    }
    if let Some(pairs) = &file.video_pairs {
        cfg.video_conditions = parse_pairs(pairs)?;
    }

    let source: Box<dyn ScorerSource> = if file.stub {
        let stat_ids = if split.train.is_empty() {
            &split.test
        } else {
            &split.train
        };
        Box::new(StubSource {
            seed: file.seed,
            stats: corpus.rms_stats(stat_ids)?,
        })
    } else {
        let mut store = CheckpointStore::default();
        for entry in &file.checkpoints {
            store.insert(
                parse_modality_code(&entry.modality)?,
                parse_view_code(&entry.view)?,
                &entry.train.parse()?,
                Checkpoint::load(&entry.path)?,
            );
        }
        Box::new(store)
    };
    Ok((corpus, split.test, cfg, source, file.out_dir))
}

fn parse_pairs(pairs: &[PairEntry]) -> Result<Vec<(TrainCondition, Condition)>> {
    pairs
        .iter()
        .map(|p| Ok((p.train.parse()?, p.test.parse()?)))
        .collect()
}

fn finish_report(table: &ResultTable, out_dir: &Path) -> Result<()> {
    print!("{}", render_text_summary(table));
    for path in emit_report(table, out_dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn grid(args: HarnessArgs) -> Result<()> {
    let (corpus, test_ids, cfg, mut source, out_dir) = load_harness(&args.config)?;
    let table = run_experiment_grid(source.as_mut(), &corpus, &test_ids, &cfg)?;
    finish_report(&table, &out_dir)
}

fn sweep(args: SweepArgs) -> Result<()> {
    let (corpus, test_ids, cfg, mut source, out_dir) = load_harness(&args.config)?;
    let table = run_fraction_sweep(source.as_mut(), &corpus, &test_ids, &args.fractions, &cfg)?;
    for (snr, monotone) in fraction_monotonicity(&table) {
        println!(
            "{} dB: WER non-increasing in Lombard share: {}",
            snr,
            if monotone { "yes" } else { "no" }
        );
    }
    finish_report(&table, &out_dir)
}

fn report(args: ReportArgs) -> Result<()> {
    let table = read_result_csv(&args.input)?;
    finish_report(&table, &args.out)
}

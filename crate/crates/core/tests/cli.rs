//! End-to-end run of the avsr binary: fixture synthesis, split generation,
//! waveform conditioning, a short training run, checkpoint evaluation and
//! the stub-scored harness commands.

use std::path::Path;
use std::process::Command;

fn avsr(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_avsr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "avsr {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

#[test]
fn cli_covers_the_full_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let out = avsr(
        dir,
        &[
            "synth-fixture",
            "--out",
            "corpus",
            "--speakers",
            "2",
            "--utt-per-condition",
            "2",
            "--seed",
            "5",
        ],
    );
    assert!(out.contains("8 utterances"), "{out}");
    assert!(dir.join("corpus/manifest.jsonl").is_file());

    let out = avsr(
        dir,
        &[
            "split",
            "--manifest",
            "corpus/manifest.jsonl",
            "--out",
            "split.json",
            "--protocol",
            "multi-speaker",
            "--counts",
            "2,0,2",
            "--seed",
            "1",
        ],
    );
    assert!(out.contains("train/val/test = 4/0/4"), "{out}");

    let manifest = std::fs::read_to_string(dir.join("corpus/manifest.jsonl")).unwrap();
    let first: serde_json::Value =
        serde_json::from_str(manifest.lines().next().unwrap()).unwrap();
    let wav = format!("corpus/{}", first["audio"].as_str().unwrap());
    let out = avsr(
        dir,
        &[
            "condition",
            "--in",
            &wav,
            "--out",
            "noisy.wav",
            "--snr",
            "-3",
            "--noise",
            "babble",
            "--condition",
            "L",
            "--seed",
            "2",
        ],
    );
    assert!(out.contains("L at -3"), "{out}");
    assert!(dir.join("noisy.wav").is_file());

    let out = avsr(
        dir,
        &[
            "train",
            "--phase",
            "audio",
            "--tiny",
            "--manifest",
            "corpus/manifest.jsonl",
            "--split",
            "split.json",
            "--condition",
            "NL",
            "--snr-mode",
            "specific:clean",
            "--roi",
            "fixture",
            "--epochs",
            "2",
            "--batch-size",
            "4",
            "--seed",
            "7",
            "--out",
            "runs",
        ],
    );
    assert!(out.contains("epoch   1"), "{out}");
    assert!(dir.join("runs/audio.ckpt").is_file());

    let out = avsr(
        dir,
        &[
            "evaluate",
            "--checkpoint",
            "runs/audio.ckpt",
            "--manifest",
            "corpus/manifest.jsonl",
            "--split",
            "split.json",
            "--test-condition",
            "NL",
            "--snr",
            "clean",
            "--decoder",
            "greedy",
            "--seed",
            "3",
            "--out",
            "cell.csv",
        ],
    );
    assert!(out.contains("A frontal NL-NL @ clean: WER"), "{out}");
    let csv = std::fs::read_to_string(dir.join("cell.csv")).unwrap();
    assert!(csv.starts_with("modality,view,train_cond,test_cond,snr_db,wer,n_words,manifest_id"));

    std::fs::write(
        dir.join("harness.toml"),
        concat!(
            "manifest = \"corpus/manifest.jsonl\"\n",
            "split = \"split.json\"\n",
            "out_dir = \"grid_results\"\n",
            "seed = 9\n",
            "stub = true\n",
            "roi = \"fixture\"\n",
            "snrs = [-15, -9, -3, 3]\n",
        ),
    )
    .unwrap();
    let out = avsr(dir, &["grid", "--config", "harness.toml"]);
    assert!(out.contains("Video-only"), "{out}");
    assert!(out.contains("Audio-visual, WER by SNR (dB)"), "{out}");
    assert!(dir.join("grid_results/results.csv").is_file());
    assert!(dir.join("grid_results/summary.txt").is_file());
    assert!(dir.join("grid_results/wer_av.png").is_file());

    std::fs::write(
        dir.join("sweep.toml"),
        concat!(
            "manifest = \"corpus/manifest.jsonl\"\n",
            "split = \"split.json\"\n",
            "out_dir = \"sweep_results\"\n",
            "seed = 9\n",
            "stub = true\n",
            "roi = \"fixture\"\n",
            "snrs = [-15, -9, -3, 3]\n",
        ),
    )
    .unwrap();
    let out = avsr(
        dir,
        &["sweep", "--config", "sweep.toml", "--fractions", "0,0.5,1.0"],
    );
    assert!(out.contains("non-increasing in Lombard share"), "{out}");
    assert!(out.contains("(NL)-L"), "{out}");
    assert!(dir.join("sweep_results/wer_fractions.png").is_file());

    let out = avsr(
        dir,
        &[
            "report",
            "--in",
            "grid_results/results.csv",
            "--out",
            "rendered",
        ],
    );
    assert!(out.contains("WER summary"), "{out}");
    assert!(dir.join("rendered/summary.txt").is_file());
}

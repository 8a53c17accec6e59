use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

// Small enough that a full train/ablate pass takes seconds.
const TINY: &str = r#"
seed = 5
[model]
embed_dim = 16
layers = 1
heads = 2
ff_dim = 32
[train]
total_epochs = 2
warmup_epochs = 0.5
flat_epochs = 0.5
rebalance = false
[synth]
clips = 10
moves_per_side = 3
"#;

fn riposte(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riposte"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = riposte(dir, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    ok(dir.path(), &["--config", "tiny.toml", "--out-dir", "s", "synth"]);
    dir
}

#[test]
fn full_pipeline_runs() {
    let dir = setup();
    let d = dir.path();
    let c = ["--config", "tiny.toml"];
    let run = |out: &str, rest: &[&str]| ok(d, &[&c[..], &["--out-dir", out], rest].concat());

    assert_eq!(fs::read_dir(d.join("s/poses")).unwrap().count(), 10);
    run("t", &["track", "s/poses"]);
    assert!(d.join("t/synth_000_left.jsonl").exists());
    assert!(read(d.join("t/tracking_report.txt")).contains("synth_009"));

    run("f", &["features", "t", "--csv"]);
    assert!(d.join("f/synth_003_right.rpf").exists());
    assert!(d.join("f/synth_003_right.csv").exists());

    run("m", &["train", "--tracks", "t", "--annotations", "s/annotations.csv"]);
    let report: serde_json::Value = serde_json::from_str(&read(d.join("m/train_report.json"))).unwrap();
    assert_eq!(report["epoch_losses"].as_array().unwrap().len(), 2);

    run("c", &["calibrate", "--model", "m/model.rpw", "--tracks", "t", "--annotations", "s/annotations.csv"]);
    assert!(read(d.join("c/calibration.toml")).contains("thresholds"));

    let infer = ["infer", "--model", "m/model.rpw", "--calibration", "c/calibration.toml"];
    run("i", &[&infer[..], &["--tracks", "t", "--annotations", "s/annotations.csv"]].concat());
    run("e", &["evaluate", "--predictions", "i/predictions.csv", "--annotations", "s/annotations.csv"]);
    for f in ["metrics.txt", "metrics.csv", "reliability.csv", "cooccurrence_pred.csv"] {
        assert!(d.join("e").join(f).exists(), "{f}");
    }

    run("w", &["window", "--model", "m/model.rpw", "t"]);
    assert!(read(d.join("w/timelines.csv")).starts_with("clip_id,side,start,end"));
    run("r", &["referee", "--timelines", "w/timelines.csv"]);
    assert!(d.join("r/verdicts.json").exists());
}

#[test]
fn ground_truth_round_trips() {
    let dir = setup();
    let d = dir.path();
    let out = ok(d, &["--out-dir", "e", "evaluate", "--predictions", "s/annotations.csv", "--annotations", "s/annotations.csv"]);
    assert!(out.contains("hamming      0.0000"), "{out}");
    assert!(out.contains("macro_f1"), "{out}");

    // Referee verdicts from annotations reproduce the generator's verdicts.
    ok(d, &["--out-dir", "r", "referee", "--annotations", "s/annotations.csv"]);
    let got: serde_json::Value = serde_json::from_str(&read(d.join("r/verdicts.json"))).unwrap();
    let want: serde_json::Value = serde_json::from_str(&read(d.join("s/truth_verdicts.json"))).unwrap();
    let decisions = |v: &serde_json::Value| {
        v.as_object()
            .unwrap()
            .iter()
            .map(|(k, x)| (k.clone(), x["decision"].clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(decisions(&got), decisions(&want));
    assert!(d.join("r/prompts/synth_000.txt").exists());
}

#[test]
fn outputs_are_deterministic() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--config", "tiny.toml", "--out-dir", "s2", "synth"]);
    assert_eq!(read(d.join("s/annotations.csv")), read(d.join("s2/annotations.csv")));
    assert_eq!(read(d.join("s/poses/synth_004.jsonl")), read(d.join("s2/poses/synth_004.jsonl")));
    for out in ["m1", "m2"] {
        ok(d, &["--config", "tiny.toml", "--out-dir", out, "train", "--tracks", "s/truth_tracks", "--annotations", "s/annotations.csv"]);
    }
    assert_eq!(fs::read(d.join("m1/model.rpw")).unwrap(), fs::read(d.join("m2/model.rpw")).unwrap());

    ok(d, &["--config", "tiny.toml", "--seed", "6", "--out-dir", "s3", "synth"]);
    assert_ne!(read(d.join("s/annotations.csv")), read(d.join("s3/annotations.csv")));
}

#[test]
fn ablation_writes_table() {
    let dir = setup();
    let d = dir.path();
    let args = [
        "--config", "tiny.toml", "--jobs", "5", "--out-dir", "a", "ablate", "--tracks", "s/truth_tracks",
        "--annotations", "s/annotations.csv", "--variant", "full", "--variant", "raw_joints",
    ];
    let out = ok(d, &args);
    assert!(out.contains("full") && out.contains("raw_joints"), "{out}");
    let csv = read(d.join("a/ablation.csv"));
    assert!(csv.starts_with("variant,metric,mean,std\n"));
    assert!(csv.lines().any(|l| l.starts_with("raw_joints,macro_f1,")), "{csv}");
    assert!(csv.lines().any(|l| l.starts_with("full,f1_hit,")), "{csv}");
    assert_eq!(read(d.join("a/folds_full.csv")).lines().count(), 6);
}

#[test]
fn config_dump_reflects_overrides() {
    let dir = TempDir::new().unwrap();
    let out = ok(dir.path(), &["--seed", "77", "--dump-config"]);
    assert!(out.starts_with("seed = 77"), "{out}");
    assert!(out.contains("[window]") && out.contains("w_max = 40"));
    // The dump itself is a valid configuration.
    fs::write(dir.path().join("c.toml"), &out).unwrap();
    assert_eq!(ok(dir.path(), &["--config", "c.toml", "--dump-config"]), out);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| riposte(d, args).status.code().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["bogus-command"]), 1);
    assert_eq!(code(&["--out-dir", "o", "track", "missing.jsonl"]), 2);

    fs::write(d.join("bad.toml"), "[train]\nlearning_rate = 0.1\n").unwrap();
    let o = riposte(d, &["--config", "bad.toml", "--dump-config"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));

    fs::write(d.join("broken.csv"), "clip_id,side,start_frame,end_frame,moves,blade\nc,left,0,5,jump,6\n").unwrap();
    let o = riposte(d, &["--out-dir", "o", "referee", "--annotations", "broken.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.csv"));
}

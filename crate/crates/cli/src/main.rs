//! `riposte`: command-line pipelines from pose files to referee verdicts.
//!
//! Exit codes: 0 success, 1 validation or processing error, 2 I/O error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fail::*;
use riposte_core::annotations::{annotations_to_string, parse_annotations, AnnotatedSequence};
use riposte_core::calib::metrics::cooccurrence;
use riposte_core::calib::ThresholdSet;
use riposte_core::config::EngineConfig;
use riposte_core::experiment::{
    ablation_csv, ablation_table, calibrate, cross_validate, evaluate_against, parse_predictions, predict_examples,
    predictions_to_csv, Calibration, SegmentPrediction, Variant,
};
use riposte_core::features::{features_for_fencer, features_to_csv, write_features};
use riposte_core::mdt::archive::{load_weights, save_weights, Provenance};
use riposte_core::mdt::data::Dataset;
use riposte_core::mdt::train::train;
use riposte_core::pose::{read_pose_file, read_track, write_pose_file, write_track, PoseTrack};
use riposte_core::referee::{
    evaluate_priority, format_prompt, query_explainer, verdict_to_json, RuleBook, Verdict, VerdictSource,
};
use riposte_core::synth::{corpus_specs, generate_bout};
use riposte_core::timeline::{align_pair, SideTimeline};
use riposte_core::tracker::track_clip;
use riposte_core::types::{MoveSet, Side};
use riposte_core::windowing::{read_timelines, timelines_to_csv, ActionTimeline, ModelClassifier};
use riposte_core::Error;

/// Helpers that keep error plumbing in one place.
mod fail {
    use super::*;

    pub struct Failure {
        pub code: u8,
        pub message: String,
    }

    impl From<Error> for Failure {
        fn from(e: Error) -> Self {
            Failure {
                code: if e.is_io() { 2 } else { 1 },
                message: e.to_string(),
            }
        }
    }

    pub type CliResult<T = ()> = std::result::Result<T, Failure>;

    /// Prefixes non-I/O errors with the file they came from.
    pub fn in_file<T>(path: &Path, r: riposte_core::Result<T>) -> CliResult<T> {
        r.map_err(|e| {
            let mut f = Failure::from(e);
            if f.code != 2 {
                f.message = format!("{}: {}", path.display(), f.message);
            }
            f
        })
    }

    pub fn write(path: &Path, text: &str) -> CliResult {
        fs::write(path, text).map_err(|e| Error::io(path, e).into())
    }

    pub fn invalid(msg: impl Into<String>) -> Failure {
        Failure {
            code: 1,
            message: msg.into(),
        }
    }
}

#[derive(Parser)]
#[command(name = "riposte", version, about = "Pose-to-verdict engine for foil fencing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct Global {
    /// Engine configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum worker threads for fold-parallel commands.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: detector frames, annotations, true verdicts.
    Synth {
        #[arg(long)]
        clips: Option<usize>,
    },
    /// Pose files (or directories of them) to one track per fencer.
    Track { inputs: Vec<PathBuf> },
    /// Track files to 101-D feature sequences.
    Features {
        inputs: Vec<PathBuf>,
        /// Also write a CSV view of each sequence.
        #[arg(long)]
        csv: bool,
    },
    /// Train a recogniser on annotated segments.
    Train {
        #[arg(long, required = true, num_args = 1..)]
        tracks: Vec<PathBuf>,
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Classify annotated segments with a trained model.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        tracks: Vec<PathBuf>,
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Decode action timelines from untrimmed tracks by dynamic windowing.
    Window {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(required = true)]
        tracks: Vec<PathBuf>,
    },
    /// Right-of-way verdicts from timelines or annotations.
    Referee {
        #[arg(long, conflicts_with = "annotations", required_unless_present = "annotations")]
        timelines: Option<PathBuf>,
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Metrics of segment predictions against annotations.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Fit per-class temperatures and thresholds on validation segments.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        tracks: Vec<PathBuf>,
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Five-fold cross-validation of ablation variants.
    Ablate {
        #[arg(long, required = true, num_args = 1..)]
        tracks: Vec<PathBuf>,
        #[arg(long)]
        annotations: PathBuf,
        /// Variants to run; the configured list when omitted.
        #[arg(long)]
        variant: Vec<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if g.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(invalid("no command given; see --help"));
    };
    if g.jobs == 0 {
        return Err(invalid("--jobs must be at least 1"));
    }
    fs::create_dir_all(&g.out_dir).map_err(|e| Error::io(&g.out_dir, e))?;
    write(&g.out_dir.join("effective_config.toml"), &cfg.to_toml())?;
    let out = g.out_dir.as_path();
    match command {
        Command::Synth { clips } => cmd_synth(&mut cfg, clips, out),
        Command::Track { inputs } => cmd_track(&cfg, &inputs, out),
        Command::Features { inputs, csv } => cmd_features(&inputs, csv, out),
        Command::Train { tracks, annotations } => cmd_train(&cfg, &tracks, &annotations, out),
        Command::Infer {
            model,
            calibration,
            tracks,
            annotations,
        } => cmd_infer(&model, calibration.as_deref(), &tracks, &annotations, out),
        Command::Window {
            model,
            calibration,
            tracks,
        } => cmd_window(&cfg, &model, calibration.as_deref(), &tracks, out),
        Command::Referee { timelines, annotations } => cmd_referee(&cfg, timelines.as_deref(), annotations.as_deref(), out),
        Command::Evaluate { predictions, annotations } => cmd_evaluate(&cfg, &predictions, &annotations, out),
        Command::Calibrate {
            model,
            tracks,
            annotations,
        } => cmd_calibrate(&cfg, &model, &tracks, &annotations, out),
        Command::Ablate {
            tracks,
            annotations,
            variant,
        } => cmd_ablate(&cfg, &tracks, &annotations, &variant, g.jobs, out),
    }
}

/// Files given directly plus `.jsonl` files inside given directories, sorted.
fn expand(inputs: &[PathBuf], ext: &str) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.extension().is_some_and(|x| x == ext))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(invalid(format!("no .{ext} inputs found")));
    }
    Ok(out)
}

fn load_tracks(inputs: &[PathBuf]) -> CliResult<Vec<PoseTrack>> {
    expand(inputs, "jsonl")?
        .iter()
        .map(|p| in_file(p, read_track(p)))
        .collect()
}

fn load_annotations(path: &Path) -> CliResult<Vec<AnnotatedSequence>> {
    in_file(path, parse_annotations(path))
}

fn track_name(clip: &str, side: Side) -> String {
    format!("{clip}_{side}.jsonl")
}

fn cmd_synth(cfg: &mut EngineConfig, clips: Option<usize>, out: &Path) -> CliResult {
    if let Some(n) = clips {
        cfg.synth.clips = n;
    }
    let specs = corpus_specs(&cfg.synth, cfg.seed)?;
    let poses = out.join("poses");
    let truth = out.join("truth_tracks");
    for d in [&poses, &truth] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut annotations = Vec::new();
    let mut verdicts = BTreeMap::new();
    for spec in &specs {
        let b = generate_bout(spec)?;
        write_pose_file(poses.join(format!("{}.jsonl", spec.clip_id)), Some(&b.header), &b.frames)?;
        for t in &b.tracks {
            write_track(truth.join(track_name(&t.clip_id, t.side)), t)?;
        }
        annotations.extend(b.annotations.iter().cloned());
        verdicts.insert(spec.clip_id.clone(), verdict_value(&b.verdict, None));
    }
    write(&out.join("annotations.csv"), &annotations_to_string(&annotations))?;
    write(&out.join("truth_verdicts.json"), &pretty(&verdicts))?;
    println!("wrote {} synthetic clips to {}", specs.len(), out.display());
    Ok(())
}

fn cmd_track(cfg: &EngineConfig, inputs: &[PathBuf], out: &Path) -> CliResult {
    let mut report = String::new();
    let files = expand(inputs, "jsonl")?;
    for p in &files {
        let file = in_file(p, read_pose_file(p))?;
        let header = file
            .header
            .ok_or_else(|| invalid(format!("{}: pose file has no header line", p.display())))?;
        let r = track_clip(&header, &file.frames, &cfg.tracker);
        for t in [&r.left, &r.right] {
            write_track(out.join(track_name(&t.clip_id, t.side)), t)?;
        }
        report.push_str(&format!("# {}\n{}", header.clip_id, r.report));
    }
    write(&out.join("tracking_report.txt"), &report)?;
    println!("tracked {} clips", files.len());
    Ok(())
}

fn cmd_features(inputs: &[PathBuf], csv: bool, out: &Path) -> CliResult {
    let tracks = load_tracks(inputs)?;
    for t in &tracks {
        let seq = features_for_fencer(t)?;
        let stem = format!("{}_{}", t.clip_id, t.side);
        write_features(out.join(format!("{stem}.rpf")), &seq)?;
        if csv {
            write(&out.join(format!("{stem}.csv")), &features_to_csv(&seq))?;
        }
    }
    println!("extracted features for {} tracks", tracks.len());
    Ok(())
}

fn cmd_train(cfg: &EngineConfig, tracks: &[PathBuf], annotations: &Path, out: &Path) -> CliResult {
    let tracks = load_tracks(tracks)?;
    let ann = load_annotations(annotations)?;
    let data = Dataset::build(&tracks, &ann)?;
    let tc = cfg.train_config();
    let all: Vec<usize> = (0..data.examples.len()).collect();
    let (w, report) = train(&data, &all, &cfg.model, &tc, |e, l| log::info!("epoch {e}: loss {l:.6}"))?;
    let prov = Provenance {
        seed: cfg.seed,
        epochs: tc.total_epochs,
        data_hash: report.data_hash.clone(),
        feature_subset: tc.feature_subset,
    };
    save_weights(out.join("model.rpw"), &w, &prov)?;
    let summary = serde_json::json!({
        "initial_loss": report.initial_loss,
        "final_loss": report.final_loss,
        "epoch_losses": report.epoch_losses,
        "steps": report.steps,
        "examples_per_epoch": report.examples_per_epoch,
        "class_weights": report.class_weights,
        "data_hash": report.data_hash,
    });
    write(&out.join("train_report.json"), &pretty(&summary))?;
    println!(
        "trained on {} segments: loss {:.4} -> {:.4}",
        all.len(),
        report.initial_loss,
        report.final_loss
    );
    Ok(())
}

fn load_calibration(path: Option<&Path>) -> CliResult<Calibration> {
    match path {
        Some(p) => in_file(p, Calibration::load(p)),
        None => Ok(Calibration::default()),
    }
}

fn cmd_infer(model: &Path, calibration: Option<&Path>, tracks: &[PathBuf], annotations: &Path, out: &Path) -> CliResult {
    let (w, manifest) = in_file(model, load_weights(model))?;
    let cal = load_calibration(calibration)?;
    let tracks = load_tracks(tracks)?;
    let ann = load_annotations(annotations)?;
    let data = Dataset::build(&tracks, &ann)?;
    let mut preds = Vec::new();
    let mut skipped = 0usize;
    for (i, ex) in data.examples.iter().enumerate() {
        let track = &data.tracks[ex.track];
        if !track.skeletons[ex.start..=ex.end].iter().any(|s| s.is_some()) {
            skipped += 1;
            continue;
        }
        let p = cal.temperatures.apply(&predict_examples(&w, &data, &[i], manifest.training.feature_subset)?[0]);
        preds.push(SegmentPrediction {
            clip_id: track.clip_id.clone(),
            side: track.side,
            start_frame: track.first_frame + ex.start as u64,
            end_frame: track.first_frame + ex.end as u64,
            moves: cal.thresholds.passes(&p.move_probs).collect::<MoveSet>(),
            blade: riposte_core::types::BladeLine::from_index(p.blade_argmax()).expect("blade index in range"),
            move_probs: Some(p.move_probs),
        });
    }
    if skipped > 0 {
        log::warn!("{skipped} segments have no valid frames and were not classified");
    }
    write(&out.join("predictions.csv"), &predictions_to_csv(&preds))?;
    println!("classified {} segments", preds.len());
    Ok(())
}

fn cmd_window(cfg: &EngineConfig, model: &Path, calibration: Option<&Path>, tracks: &[PathBuf], out: &Path) -> CliResult {
    let (w, manifest) = in_file(model, load_weights(model))?;
    let cal = load_calibration(calibration)?;
    let classifier = ModelClassifier {
        weights: &w,
        subset: manifest.training.feature_subset,
        temperatures: calibration.map(|_| cal.temperatures),
    };
    let mut timelines = Vec::new();
    for t in load_tracks(tracks)? {
        let seq = features_for_fencer(&t)?;
        let (tl, passes) = ActionTimeline::decode(&seq, &classifier, &cal.thresholds, &cfg.window)?;
        log::info!("{} {}: {} actions, {passes} forward passes", t.clip_id, t.side, tl.actions.len());
        timelines.push(tl);
    }
    timelines.sort_by(|a, b| (&a.clip_id, a.side).cmp(&(&b.clip_id, b.side)));
    write(&out.join("timelines.csv"), &timelines_to_csv(&timelines))?;
    println!("decoded {} timelines", timelines.len());
    Ok(())
}

fn verdict_value(v: &Verdict, source: Option<VerdictSource>) -> serde_json::Value {
    let mut j: serde_json::Value = serde_json::from_str(&verdict_to_json(v)).expect("verdict JSON");
    if let Some(s) = source {
        j["source"] = serde_json::to_value(s).expect("source serialises");
    }
    j
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON output");
    s.push('\n');
    s
}

fn cmd_referee(cfg: &EngineConfig, timelines: Option<&Path>, annotations: Option<&Path>, out: &Path) -> CliResult {
    let sides: Vec<SideTimeline> = match (timelines, annotations) {
        (Some(p), _) => in_file(p, read_timelines(p))?.iter().map(|t| t.to_side_timeline()).collect(),
        (None, Some(p)) => load_annotations(p)?.iter().map(SideTimeline::from).collect(),
        (None, None) => return Err(invalid("either --timelines or --annotations is required")),
    };
    let book: RuleBook = cfg.referee.rulebook()?;
    let mut by_clip: BTreeMap<String, [Option<SideTimeline>; 2]> = BTreeMap::new();
    for s in sides {
        let slot = &mut by_clip.entry(s.clip_id.clone()).or_default()[s.side.index()];
        if slot.is_some() {
            return Err(invalid(format!("clip {} has two {} timelines", s.clip_id, s.side)));
        }
        *slot = Some(s);
    }
    let prompts = out.join("prompts");
    fs::create_dir_all(&prompts).map_err(|e| Error::io(&prompts, e))?;
    let mut verdicts = BTreeMap::new();
    for (clip, [l, r]) in by_clip {
        let empty = |side| SideTimeline {
            clip_id: clip.clone(),
            side,
            events: Vec::new(),
        };
        let t = align_pair(&l.unwrap_or_else(|| empty(Side::Left)), &r.unwrap_or_else(|| empty(Side::Right)))?;
        if t.is_empty() {
            log::warn!("clip {clip} has no events; skipped");
            continue;
        }
        let engine = evaluate_priority(&t, &book)?;
        let prompt = format_prompt(&t, &book)?;
        write(&prompts.join(format!("{clip}.txt")), &prompt)?;
        let value = if cfg.referee.explainer.endpoint.is_some() {
            let o = query_explainer(&prompt, &cfg.referee.explainer, &engine)?;
            let mut v = verdict_value(&o.verdict, Some(o.source));
            if let Some(d) = o.diagnostic {
                v["diagnostic"] = d.into();
            }
            v
        } else {
            verdict_value(&engine, None)
        };
        println!("{clip}: {}", value["decision"].as_str().unwrap_or("?"));
        verdicts.insert(clip, value);
    }
    write(&out.join("verdicts.json"), &pretty(&verdicts))?;
    Ok(())
}

fn cmd_evaluate(cfg: &EngineConfig, predictions: &Path, annotations: &Path, out: &Path) -> CliResult {
    let text = fs::read_to_string(predictions).map_err(|e| Error::io(predictions, e))?;
    let preds = in_file(predictions, parse_predictions(&text))?;
    let truth = load_annotations(annotations)?;
    let (report, blade) = evaluate_against(&preds, &truth, cfg.calibration.bins)?;
    let mut text = report.to_text();
    text.push_str(&format!("blade_acc    {blade:.4}\n"));
    write(&out.join("metrics.txt"), &text)?;
    write(&out.join("metrics.csv"), &format!("{}blade_accuracy,{blade}\n", report.to_csv()))?;
    write(&out.join("reliability.csv"), &report.reliability_csv())?;
    let true_sets: Vec<MoveSet> = truth.iter().flat_map(|s| s.segments.iter().map(|g| g.moves)).collect();
    let pred_sets: Vec<MoveSet> = preds.iter().map(|p| p.moves).collect();
    write(&out.join("cooccurrence_truth.csv"), &cooccurrence(&true_sets).to_csv())?;
    write(&out.join("cooccurrence_pred.csv"), &cooccurrence(&pred_sets).to_csv())?;
    print!("{text}");
    Ok(())
}

fn cmd_calibrate(cfg: &EngineConfig, model: &Path, tracks: &[PathBuf], annotations: &Path, out: &Path) -> CliResult {
    let (w, manifest) = in_file(model, load_weights(model))?;
    let tracks = load_tracks(tracks)?;
    let ann = load_annotations(annotations)?;
    let data = Dataset::build(&tracks, &ann)?;
    let idx: Vec<usize> = (0..data.examples.len())
        .filter(|&i| {
            let ex = &data.examples[i];
            data.tracks[ex.track].skeletons[ex.start..=ex.end].iter().any(|s| s.is_some())
        })
        .collect();
    if idx.is_empty() {
        return Err(invalid("no usable validation segments"));
    }
    let preds = predict_examples(&w, &data, &idx, manifest.training.feature_subset)?;
    let truth: Vec<_> = idx.iter().map(|&i| data.examples[i].moves.to_indicator()).collect();
    let blades: Vec<_> = idx.iter().map(|&i| data.examples[i].blade.index()).collect();
    let cal = calibrate(&preds, &truth, &blades, Variant::Full, &cfg.calibration.grid())?;
    write(&out.join("calibration.toml"), &cal.to_toml())?;
    let uncal = Calibration {
        thresholds: ThresholdSet::default(),
        temperatures: Default::default(),
    };
    let (before, _) = riposte_core::experiment::evaluate_predictions(&preds, &data, &idx, &uncal, cfg.calibration.bins)?;
    let (after, _) = riposte_core::experiment::evaluate_predictions(&preds, &data, &idx, &cal, cfg.calibration.bins)?;
    let summary = format!(
        "validation segments {}\nbefore: macro_f1 {:.4} ece {:.4}\nafter:  macro_f1 {:.4} ece {:.4}\n",
        idx.len(),
        before.classification.macro_f1,
        before.calibration.ece,
        after.classification.macro_f1,
        after.calibration.ece
    );
    write(&out.join("calibration_report.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_ablate(cfg: &EngineConfig, tracks: &[PathBuf], annotations: &Path, names: &[String], jobs: usize, out: &Path) -> CliResult {
    let variants: Vec<Variant> = if names.is_empty() {
        cfg.ablation.variants.clone()
    } else {
        names.iter().map(|n| n.parse()).collect::<riposte_core::Result<_>>()?
    };
    let tracks = load_tracks(tracks)?;
    let ann = load_annotations(annotations)?;
    let data = Dataset::build(&tracks, &ann)?;
    let base = cfg.train_config();
    let mut runs = Vec::new();
    for v in variants {
        log::info!("variant {}: {}", v.name(), v.description());
        let cv = cross_validate(&data, &cfg.model, &base, v, &cfg.calibration, jobs)?;
        let mut folds = String::from("fold,test_examples,macro_f1,micro_f1,weighted_f1,hamming,ece,mce,brier,blade_accuracy\n");
        for f in &cv.folds {
            let c = &f.metrics.classification;
            let k = &f.metrics.calibration;
            folds.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                f.fold, f.test_examples, c.macro_f1, c.micro_f1, c.weighted_f1, c.hamming, k.ece, k.mce, k.brier, f.blade_accuracy
            ));
        }
        write(&out.join(format!("folds_{}.csv", v.name())), &folds)?;
        runs.push(cv);
    }
    let table = ablation_table(&runs);
    write(&out.join("ablation.txt"), &table)?;
    write(&out.join("ablation.csv"), &ablation_csv(&runs))?;
    print!("{table}");
    Ok(())
}

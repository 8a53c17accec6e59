//! Cross-validated training, calibration and evaluation, plus the ablation
//! variants run by the same harness.

use std::fmt::Write as _;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calib::metrics::flatten_moves;
use crate::calib::{
    compute_calibration, compute_classification, kfold_split, scale_temperatures, tune_thresholds_on,
    Fold, MetricsReport, TemperatureSet, ThresholdSet,
};
use crate::error::{Error, Result};
use crate::features::FeatureSubset;
use crate::mdt::data::Dataset;
use crate::mdt::train::{train, TrainReport};
use crate::mdt::{forward, AugmentMode, ModelConfig, ModelWeights, Prediction, TrainConfig};
use crate::types::{MoveSet, NUM_BLADES, NUM_MOVES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Equal-width confidence bins for ECE and MCE.
    pub bins: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_step: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            bins: crate::calib::metrics::DEFAULT_BINS,
            grid_min: 0.05,
            grid_max: 0.95,
            grid_step: 0.01,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::Invalid("calibration.bins must be at least 1".into()));
        }
        let ok = 0.0 < self.grid_min && self.grid_min <= self.grid_max && self.grid_max < 1.0 && self.grid_step > 0.0;
        if !ok {
            return Err(Error::Invalid(
                "calibration grid needs 0 < grid_min <= grid_max < 1 and grid_step > 0".into(),
            ));
        }
        Ok(())
    }

    /// Threshold candidates; computed from integer steps so the default grid is
    /// exactly 0.05, 0.06, ..., 0.95.
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.grid_max - self.grid_min) / self.grid_step + 1e-9).floor() as usize;
        let inv = (1.0 / self.grid_step).round();
        let lo = (self.grid_min * inv).round();
        if (inv * self.grid_step - 1.0).abs() < 1e-12 && (lo / inv - self.grid_min).abs() < 1e-12 {
            (0..=n).map(|k| (lo + k as f64) / inv).collect()
        } else {
            (0..=n).map(|k| self.grid_min + k as f64 * self.grid_step).collect()
        }
    }
}

/// Post-training calibration stored next to a weights archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub thresholds: ThresholdSet,
    pub temperatures: TemperatureSet,
}

impl Calibration {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Invalid(format!("bad calibration file: {e}")))?;
        c.temperatures.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// Rows of the ablation table; `Full` is the reference configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoThresholds,
    RawJoints,
    AugNone,
    AugNoiseOnly,
    AugTemporalOnly,
    AugFeatureSpecific,
    NoTemperature,
    EqualWeights,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Full,
        Variant::NoThresholds,
        Variant::RawJoints,
        Variant::AugNone,
        Variant::AugNoiseOnly,
        Variant::AugTemporalOnly,
        Variant::AugFeatureSpecific,
        Variant::NoTemperature,
        Variant::EqualWeights,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoThresholds => "no_thresholds",
            Variant::RawJoints => "raw_joints",
            Variant::AugNone => "aug_none",
            Variant::AugNoiseOnly => "aug_noise_only",
            Variant::AugTemporalOnly => "aug_temporal_only",
            Variant::AugFeatureSpecific => "aug_feature_specific",
            Variant::NoTemperature => "no_temperature",
            Variant::EqualWeights => "equal_weights",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Variant::Full => "full model",
            Variant::NoThresholds => "no per-class thresholds (all 0.5)",
            Variant::RawJoints => "raw joints (24D, no derived features)",
            Variant::AugNone => "no augmentation",
            Variant::AugNoiseOnly => "noise augmentation only",
            Variant::AugTemporalOnly => "temporal jitter only",
            Variant::AugFeatureSpecific => "rotation and scale only",
            Variant::NoTemperature => "no per-class temperature scaling",
            Variant::EqualWeights => "equal move and blade loss weights",
        }
    }

    /// The training configuration this variant trains with.
    pub fn train_config(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        match self {
            Variant::RawJoints => c.feature_subset = FeatureSubset::RawJoints,
            Variant::AugNone => c.augment.mode = AugmentMode::None,
            Variant::AugNoiseOnly => c.augment.mode = AugmentMode::NoiseOnly,
            Variant::AugTemporalOnly => c.augment.mode = AugmentMode::TemporalOnly,
            Variant::AugFeatureSpecific => c.augment.mode = AugmentMode::FeatureSpecific,
            Variant::EqualWeights => c.equal_weights = true,
            Variant::Full | Variant::NoThresholds | Variant::NoTemperature => {}
        }
        c
    }

    fn tunes_thresholds(self) -> bool {
        self != Variant::NoThresholds
    }

    fn scales_temperatures(self) -> bool {
        self != Variant::NoTemperature
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
            Error::Invalid(format!("unknown variant {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

/// Raw predictions for the examples at `idx`, without temperatures.
pub fn predict_examples(w: &ModelWeights, data: &Dataset, idx: &[usize], subset: FeatureSubset) -> Result<Vec<Prediction>> {
    idx.iter()
        .map(|&i| {
            let (x, mask) = data.materialize::<ChaCha8Rng>(&data.examples[i], subset, None);
            forward(w, x.view(), &mask)
        })
        .collect()
}

/// Examples with at least one valid frame; the others cannot be classified.
fn usable(data: &Dataset, idx: Vec<usize>) -> Vec<usize> {
    idx.into_iter()
        .filter(|&i| {
            let ex = &data.examples[i];
            data.tracks[ex.track].skeletons[ex.start..=ex.end].iter().any(|s| s.is_some())
        })
        .collect()
}

fn truth_rows(data: &Dataset, idx: &[usize]) -> (Vec<[bool; NUM_MOVES]>, Vec<usize>) {
    let moves = idx.iter().map(|&i| data.examples[i].moves.to_indicator()).collect();
    let blades = idx.iter().map(|&i| data.examples[i].blade.index()).collect();
    (moves, blades)
}

/// Fits temperatures and then thresholds on validation predictions.
pub fn calibrate(
    preds: &[Prediction],
    truth: &[[bool; NUM_MOVES]],
    blades: &[usize],
    variant: Variant,
    grid: &[f64],
) -> Result<Calibration> {
    let temperatures = if variant.scales_temperatures() {
        let logits: Vec<[f64; NUM_MOVES + NUM_BLADES]> = preds.iter().map(|p| p.logits()).collect();
        scale_temperatures(&logits, truth, blades)?
    } else {
        TemperatureSet::default()
    };
    let thresholds = if variant.tunes_thresholds() {
        let probs: Vec<[f64; NUM_MOVES]> = preds.iter().map(|p| temperatures.apply(p).move_probs).collect();
        tune_thresholds_on(&probs, truth, grid)?.thresholds
    } else {
        ThresholdSet::default()
    };
    Ok(Calibration {
        thresholds,
        temperatures,
    })
}

/// Metrics of calibrated predictions against the examples' labels.
pub fn evaluate_predictions(
    preds: &[Prediction],
    data: &Dataset,
    idx: &[usize],
    cal: &Calibration,
    bins: usize,
) -> Result<(MetricsReport, f64)> {
    let scaled: Vec<Prediction> = preds.iter().map(|p| cal.temperatures.apply(p)).collect();
    let pred_sets: Vec<MoveSet> = scaled.iter().map(|p| cal.thresholds.passes(&p.move_probs).collect()).collect();
    let truth: Vec<MoveSet> = idx.iter().map(|&i| data.examples[i].moves).collect();
    let probs: Vec<[f64; NUM_MOVES]> = scaled.iter().map(|p| p.move_probs).collect();
    let (p, t) = flatten_moves(&probs, &truth);
    let report = MetricsReport {
        classification: compute_classification(&pred_sets, &truth)?,
        calibration: compute_calibration(&p, &t, bins)?,
    };
    let correct = scaled
        .iter()
        .zip(idx)
        .filter(|(p, &i)| p.blade_argmax() == data.examples[i].blade.index())
        .count();
    Ok((report, correct as f64 / idx.len().max(1) as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub metrics: MetricsReport,
    pub blade_accuracy: f64,
    pub calibration: Calibration,
    pub train: TrainReport,
    pub test_examples: usize,
}

/// Trains on the fold's training clips, calibrates on its validation clips
/// and scores its test clips. Returns the trained weights too.
pub fn run_fold(
    data: &Dataset,
    fold_index: usize,
    fold: &Fold,
    model: &ModelConfig,
    base: &TrainConfig,
    variant: Variant,
    cal_cfg: &CalibrationConfig,
) -> Result<(ModelWeights, FoldResult)> {
    let mut cfg = variant.train_config(base);
    cfg.seed = base.seed.wrapping_add(fold_index as u64);
    let train_idx = data.examples_for_clips(&fold.train);
    let val_idx = usable(data, data.examples_for_clips(&fold.val));
    let test_idx = usable(data, data.examples_for_clips(&fold.test));
    if val_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Invalid(format!("fold {fold_index} has no usable validation or test examples")));
    }
    log::info!(
        "fold {fold_index} [{}]: {} train, {} val, {} test examples",
        variant.name(),
        train_idx.len(),
        val_idx.len(),
        test_idx.len()
    );
    let (w, report) = train(data, &train_idx, model, &cfg, |e, l| log::debug!("fold {fold_index} epoch {e}: loss {l:.5}"))?;
    let val_preds = predict_examples(&w, data, &val_idx, cfg.feature_subset)?;
    let (vt, vb) = truth_rows(data, &val_idx);
    let cal = calibrate(&val_preds, &vt, &vb, variant, &cal_cfg.grid())?;
    let test_preds = predict_examples(&w, data, &test_idx, cfg.feature_subset)?;
    let (metrics, blade_accuracy) = evaluate_predictions(&test_preds, data, &test_idx, &cal, cal_cfg.bins)?;
    Ok((
        w,
        FoldResult {
            fold: fold_index,
            metrics,
            blade_accuracy,
            calibration: cal,
            train: report,
            test_examples: test_idx.len(),
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub variant: Variant,
    pub folds: Vec<FoldResult>,
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

impl CrossValidation {
    fn collect(&self, f: impl Fn(&FoldResult) -> f64) -> (f64, f64) {
        mean_std(&self.folds.iter().map(f).collect::<Vec<_>>())
    }

    /// `(name, mean, std)` for each headline metric.
    pub fn summary(&self) -> Vec<(&'static str, f64, f64)> {
        let rows: [(&'static str, fn(&FoldResult) -> f64); 8] = [
            ("macro_f1", |r| r.metrics.classification.macro_f1),
            ("micro_f1", |r| r.metrics.classification.micro_f1),
            ("weighted_f1", |r| r.metrics.classification.weighted_f1),
            ("hamming", |r| r.metrics.classification.hamming),
            ("ece", |r| r.metrics.calibration.ece),
            ("mce", |r| r.metrics.calibration.mce),
            ("brier", |r| r.metrics.calibration.brier),
            ("blade_accuracy", |r| r.blade_accuracy),
        ];
        rows.iter()
            .map(|(n, f)| {
                let (m, s) = self.collect(f);
                (*n, m, s)
            })
            .collect()
    }

    /// Per-class F1 averaged over folds.
    pub fn per_class_f1(&self) -> [f64; NUM_MOVES] {
        let mut out = [0.0; NUM_MOVES];
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.collect(|r| r.metrics.classification.per_class[c].f1).0;
        }
        out
    }
}

/// Runs every fold, at most `jobs` at a time. Results come back in fold order
/// whatever the scheduling.
pub fn cross_validate(
    data: &Dataset,
    model: &ModelConfig,
    base: &TrainConfig,
    variant: Variant,
    cal_cfg: &CalibrationConfig,
    jobs: usize,
) -> Result<CrossValidation> {
    let folds = kfold_split(&data.clip_ids(), base.seed)?;
    let jobs = jobs.max(1);
    let mut results: Vec<Option<Result<FoldResult>>> = (0..folds.len()).map(|_| None).collect();
    for chunk in (0..folds.len()).collect::<Vec<_>>().chunks(jobs) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&k| {
                    let fold = &folds[k];
                    (k, s.spawn(move || run_fold(data, k, fold, model, base, variant, cal_cfg).map(|(_, r)| r)))
                })
                .collect();
            for (k, h) in handles {
                results[k] = Some(h.join().unwrap_or_else(|_| Err(Error::Model(format!("fold {k} panicked")))));
            }
        });
    }
    let folds = results.into_iter().map(|r| r.expect("every fold ran")).collect::<Result<Vec<_>>>()?;
    Ok(CrossValidation { variant, folds })
}

/// Ablation table in text form: one row per variant, mean ± std over folds.
pub fn ablation_table(runs: &[CrossValidation]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<22} {:>15} {:>15} {:>15} {:>15}",
        "variant", "macro_f1", "hamming", "ece", "blade_acc"
    );
    for r in runs {
        let sum = r.summary();
        let get = |n: &str| sum.iter().find(|(k, _, _)| *k == n).map(|&(_, m, s)| format!("{m:.4}±{s:.4}")).unwrap();
        let _ = writeln!(
            s,
            "{:<22} {:>15} {:>15} {:>15} {:>15}",
            r.variant.name(),
            get("macro_f1"),
            get("hamming"),
            get("ece"),
            get("blade_accuracy")
        );
    }
    s
}

/// Machine-readable ablation report: `variant,metric,mean,std` plus per-class F1 rows.
pub fn ablation_csv(runs: &[CrossValidation]) -> String {
    let mut s = String::from("variant,metric,mean,std\n");
    for r in runs {
        for (n, m, sd) in r.summary() {
            let _ = writeln!(s, "{},{n},{m},{sd}", r.variant.name());
        }
        for (m, f1) in crate::types::MoveLabel::ALL.iter().zip(r.per_class_f1()) {
            let _ = writeln!(s, "{},f1_{},{f1},", r.variant.name(), m.name());
        }
    }
    s
}

/// One classified segment. Probabilities are absent when the file holds
/// hard labels only.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPrediction {
    pub clip_id: String,
    pub side: crate::types::Side,
    pub start_frame: u64,
    pub end_frame: u64,
    pub moves: MoveSet,
    pub blade: crate::types::BladeLine,
    pub move_probs: Option<[f64; NUM_MOVES]>,
}

fn prob_columns() -> Vec<String> {
    crate::types::MoveLabel::ALL.iter().map(|m| format!("p_{}", m.name())).collect()
}

/// Annotation columns followed by one `p_<move>` column per class.
pub fn predictions_to_csv(preds: &[SegmentPrediction]) -> String {
    let mut s = crate::annotations::ANNOTATION_HEADER.join(",");
    for c in prob_columns() {
        s.push(',');
        s.push_str(&c);
    }
    s.push('\n');
    for p in preds {
        let _ = write!(
            s,
            "{},{},{},{},{},{}",
            p.clip_id,
            p.side,
            p.start_frame,
            p.end_frame,
            p.moves.to_field(),
            p.blade
        );
        for v in p.move_probs.unwrap_or([f64::NAN; NUM_MOVES]) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Reads prediction CSV, or plain annotation CSV (hard labels only).
pub fn parse_predictions(text: &str) -> Result<Vec<SegmentPrediction>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let base = crate::annotations::ANNOTATION_HEADER;
    if header.len() < base.len() || header[..base.len()] != base {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header starting with {}", base.join(",")),
        });
    }
    let with_probs = header.len() == base.len() + NUM_MOVES && header[base.len()..] == prob_columns()[..];
    if !with_probs && header.len() != base.len() {
        return Err(Error::Parse {
            line: 1,
            message: "unexpected extra columns; expected none or one p_<move> column per class".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let err = |m: String| Error::Parse { line, message: m };
        let num = |k: usize| rec[k].parse::<u64>().map_err(|_| err(format!("field `{}` is not a frame number", base[k])));
        let move_probs = if with_probs {
            let mut p = [0.0; NUM_MOVES];
            for (c, v) in p.iter_mut().enumerate() {
                *v = rec[base.len() + c]
                    .parse::<f64>()
                    .map_err(|_| err(format!("field `{}` is not a number", header[base.len() + c])))?;
            }
            (!p.iter().any(|v| v.is_nan())).then_some(p)
        } else {
            None
        };
        out.push(SegmentPrediction {
            clip_id: rec[0].to_string(),
            side: rec[1].parse().map_err(|e: Error| err(e.to_string()))?,
            start_frame: num(2)?,
            end_frame: num(3)?,
            moves: MoveSet::parse_field(&rec[4]).map_err(|e| err(e.to_string()))?,
            blade: rec[5].parse().map_err(|e: Error| err(e.to_string()))?,
            move_probs,
        });
    }
    Ok(out)
}

/// Scores predictions against annotated segments matched by clip, side and
/// frame range. Predictions without probabilities are scored as hard 0/1.
pub fn evaluate_against(
    preds: &[SegmentPrediction],
    truth: &[crate::annotations::AnnotatedSequence],
    bins: usize,
) -> Result<(MetricsReport, f64)> {
    let mut pred_sets = Vec::new();
    let mut true_sets = Vec::new();
    let mut probs = Vec::new();
    let mut blade_hits = 0usize;
    for seq in truth {
        for seg in &seq.segments {
            let p = preds
                .iter()
                .find(|p| {
                    p.clip_id == seq.clip_id
                        && p.side == seq.side
                        && p.start_frame == seg.start_frame
                        && p.end_frame == seg.end_frame
                })
                .ok_or_else(|| {
                    Error::Invalid(format!(
                        "no prediction for {} {} frames {}-{}",
                        seq.clip_id, seq.side, seg.start_frame, seg.end_frame
                    ))
                })?;
            pred_sets.push(p.moves);
            true_sets.push(seg.moves);
            probs.push(p.move_probs.unwrap_or_else(|| p.moves.to_indicator().map(|b| if b { 1.0 } else { 0.0 })));
            blade_hits += (p.blade == seg.blade) as usize;
        }
    }
    if true_sets.is_empty() {
        return Err(Error::Invalid("no annotated segments to evaluate".into()));
    }
    let (p, t) = flatten_moves(&probs, &true_sets);
    Ok((
        MetricsReport {
            classification: compute_classification(&pred_sets, &true_sets)?,
            calibration: compute_calibration(&p, &t, bins)?,
        },
        blade_hits as f64 / true_sets.len() as f64,
    ))
}

//! Decoding a continuous per-fencer descriptor stream into timed actions.
//!
//! From a start frame the window grows one frame at a time until some move
//! clears its own threshold (or the window reaches its maximum length, in
//! which case the start advances by one). After an emission the scan resumes
//! right after the emitted window. A half-step immediately followed by the
//! matching full step is folded into that step.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::{TemperatureSet, ThresholdSet};
use crate::error::{Error, Result};
use crate::features::{FeatureSequence, FeatureSubset};
use crate::mdt::data::feature_rows;
use crate::mdt::{forward, ModelWeights, Prediction};
use crate::timeline::{SideTimeline, TimelineEvent};
use crate::types::{BladeLine, MoveLabel, MoveSet, Side};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub w0: usize,
    pub w_max: usize,
    /// Temporal IoU above which an overlapping same-label action is suppressed.
    pub nms_iou: f64,
    /// Maximum gap, in frames, between a half-step and the full step it is merged into.
    pub half_step_horizon: u64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            w0: 1,
            w_max: 40,
            nms_iou: 0.5,
            half_step_horizon: 12,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w0 == 0 || self.w0 > self.w_max {
            return Err(Error::Config(format!(
                "window bounds must satisfy 1 <= w0 <= w_max (got {} and {})",
                self.w0, self.w_max
            )));
        }
        if !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(Error::Config(format!("nms_iou {} outside [0, 1]", self.nms_iou)));
        }
        Ok(())
    }
}

/// Anything that scores an inclusive frame range of a descriptor sequence.
pub trait WindowClassifier {
    fn classify(&self, seq: &FeatureSequence, start: usize, end: usize) -> Result<Prediction>;
}

/// The trained recogniser, optionally with per-class temperatures.
pub struct ModelClassifier<'a> {
    pub weights: &'a ModelWeights,
    pub subset: FeatureSubset,
    pub temperatures: Option<TemperatureSet>,
}

impl WindowClassifier for ModelClassifier<'_> {
    fn classify(&self, seq: &FeatureSequence, start: usize, end: usize) -> Result<Prediction> {
        let (x, mask) = feature_rows(seq, start, end, self.subset);
        let pred = forward(self.weights, x.view(), &mask)?;
        Ok(match &self.temperatures {
            Some(t) => t.apply(&pred),
            None => pred,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedAction {
    pub start_frame: u64,
    pub end_frame: u64,
    /// Confident moves with their probabilities, in label order.
    pub moves: Vec<(MoveLabel, f64)>,
    pub blade: BladeLine,
    pub blade_confidence: f64,
}

impl DetectedAction {
    fn from_prediction(start: u64, end: u64, pred: &Prediction, thresholds: &ThresholdSet) -> Self {
        let moves = thresholds
            .passes(&pred.move_probs)
            .map(|m| (m, pred.move_probs[m.index()]))
            .collect();
        let b = pred.blade_argmax();
        Self {
            start_frame: start,
            end_frame: end,
            moves,
            blade: BladeLine::from_index(b).expect("blade index"),
            blade_confidence: pred.blade_probs[b],
        }
    }

    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn move_set(&self) -> MoveSet {
        self.moves.iter().map(|(m, _)| *m).collect()
    }

    pub fn confidence(&self) -> f64 {
        self.moves.iter().map(|(_, p)| *p).fold(0.0, f64::max)
    }

    pub fn contains(&self, m: MoveLabel) -> bool {
        self.moves.iter().any(|(l, _)| *l == m)
    }

    /// Move names, or "no confident move".
    pub fn describe(&self) -> String {
        if self.moves.is_empty() {
            "no confident move".into()
        } else {
            self.move_set().display_list()
        }
    }
}

/// IoU of two inclusive frame intervals.
pub fn interval_iou(a: (u64, u64), b: (u64, u64)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    let inter = if hi >= lo { hi - lo + 1 } else { 0 };
    let union = (a.1 - a.0 + 1) + (b.1 - b.0 + 1) - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub actions: Vec<DetectedAction>,
    pub forward_passes: usize,
}

fn full_step_for(half: MoveLabel) -> Option<MoveLabel> {
    match half {
        MoveLabel::HalfStepForward => Some(MoveLabel::StepForward),
        MoveLabel::HalfStepBackward => Some(MoveLabel::StepBackward),
        _ => None,
    }
}

/// Folds `prev` (a half-step) into `next` when `next` is the matching full step.
fn merge_half_step(prev: &DetectedAction, next: &DetectedAction, cfg: &WindowConfig) -> Option<DetectedAction> {
    let gap = next.start_frame.checked_sub(prev.end_frame + 1)?;
    if gap > cfg.half_step_horizon || next.end_frame - prev.start_frame + 1 > cfg.w_max as u64 {
        return None;
    }
    let half = [MoveLabel::HalfStepForward, MoveLabel::HalfStepBackward]
        .into_iter()
        .find(|h| prev.contains(*h) && next.contains(full_step_for(*h).unwrap()))?;
    let mut moves = next.moves.clone();
    for &(m, p) in &prev.moves {
        if m == half {
            continue;
        }
        match moves.iter_mut().find(|(l, _)| *l == m) {
            Some(slot) => slot.1 = slot.1.max(p),
            None => moves.push((m, p)),
        }
    }
    moves.sort_by_key(|(m, _)| *m);
    Some(DetectedAction {
        start_frame: prev.start_frame,
        end_frame: next.end_frame,
        moves,
        blade: next.blade,
        blade_confidence: next.blade_confidence,
    })
}

/// Greedy growing-window decoding. Windows without a valid frame are skipped
/// without a model call. Performs at most `T · w_max` classifier calls.
pub fn scan<C: WindowClassifier + ?Sized>(
    seq: &FeatureSequence,
    classifier: &C,
    thresholds: &ThresholdSet,
    cfg: &WindowConfig,
) -> Result<ScanResult> {
    cfg.validate()?;
    let t_len = seq.len();
    let mut actions: Vec<DetectedAction> = Vec::new();
    let mut passes = 0usize;
    let mut s = 0usize;
    while s < t_len {
        let mut emitted = None;
        for w in cfg.w0..=cfg.w_max {
            let e = s + w - 1;
            if e >= t_len {
                break;
            }
            if !seq.valid_mask[s..=e].iter().any(|&v| v) {
                continue;
            }
            let pred = classifier.classify(seq, s, e)?;
            passes += 1;
            let action = DetectedAction::from_prediction(
                seq.first_frame + s as u64,
                seq.first_frame + e as u64,
                &pred,
                thresholds,
            );
            if !action.moves.is_empty() {
                emitted = Some((e, action));
                break;
            }
        }
        match emitted {
            Some((e, action)) => {
                let merged = actions.last().and_then(|prev| merge_half_step(prev, &action, cfg));
                match merged {
                    Some(m) => *actions.last_mut().unwrap() = m,
                    None => actions.push(action),
                }
                s = e + 1;
            }
            None => s += 1,
        }
    }
    debug_assert!(passes <= t_len * cfg.w_max);
    Ok(ScanResult {
        actions,
        forward_passes: passes,
    })
}

fn label_key(a: &DetectedAction) -> Vec<usize> {
    a.moves.iter().map(|(m, _)| m.index()).collect()
}

/// Ranking used by NMS: confidence descending, then start, labels and end ascending.
pub fn nms_order(a: &DetectedAction, b: &DetectedAction) -> Ordering {
    b.confidence()
        .total_cmp(&a.confidence())
        .then(a.start_frame.cmp(&b.start_frame))
        .then_with(|| label_key(a).cmp(&label_key(b)))
        .then(a.end_frame.cmp(&b.end_frame))
}

/// Suppresses actions overlapping a better-ranked kept action that shares a
/// move label; survivors are returned in start order.
pub fn merge_nms(mut raw: Vec<DetectedAction>, overlap_threshold: f64) -> Vec<DetectedAction> {
    raw.sort_by(nms_order);
    let mut kept: Vec<DetectedAction> = Vec::new();
    for a in raw {
        let suppressed = kept.iter().any(|k| {
            k.move_set().intersects(a.move_set())
                && interval_iou((k.start_frame, k.end_frame), (a.start_frame, a.end_frame)) > overlap_threshold
        });
        if !suppressed {
            kept.push(a);
        }
    }
    kept.sort_by(|a, b| {
        a.start_frame
            .cmp(&b.start_frame)
            .then(a.end_frame.cmp(&b.end_frame))
            .then_with(|| label_key(a).cmp(&label_key(b)))
    });
    kept
}

/// One classifier call over a whole trimmed segment.
pub fn decode_trimmed<C: WindowClassifier + ?Sized>(
    seq: &FeatureSequence,
    classifier: &C,
    thresholds: &ThresholdSet,
) -> Result<DetectedAction> {
    if seq.is_empty() || !seq.valid_mask.iter().any(|&v| v) {
        return Err(Error::Model("empty sequence".into()));
    }
    let pred = classifier.classify(seq, 0, seq.len() - 1)?;
    Ok(DetectedAction::from_prediction(
        seq.first_frame,
        seq.first_frame + seq.len() as u64 - 1,
        &pred,
        thresholds,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTimeline {
    pub clip_id: String,
    pub side: Side,
    pub actions: Vec<DetectedAction>,
}

pub const TIMELINE_HEADER: &str = "clip_id,side,start,end,moves,blade,confidence";

impl ActionTimeline {
    /// Scan plus NMS.
    pub fn decode<C: WindowClassifier + ?Sized>(
        seq: &FeatureSequence,
        classifier: &C,
        thresholds: &ThresholdSet,
        cfg: &WindowConfig,
    ) -> Result<(Self, usize)> {
        let raw = scan(seq, classifier, thresholds, cfg)?;
        Ok((
            Self {
                clip_id: seq.clip_id.clone(),
                side: seq.side,
                actions: merge_nms(raw.actions, cfg.nms_iou),
            },
            raw.forward_passes,
        ))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(TIMELINE_HEADER);
        s.push('\n');
        self.append_rows(&mut s);
        s
    }

    fn append_rows(&self, s: &mut String) {
        for a in &self.actions {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                self.clip_id,
                self.side,
                a.start_frame,
                a.end_frame,
                a.move_set().to_field(),
                a.blade,
                a.confidence()
            );
        }
    }

    pub fn to_side_timeline(&self) -> SideTimeline {
        SideTimeline {
            clip_id: self.clip_id.clone(),
            side: self.side,
            events: self
                .actions
                .iter()
                .filter(|a| !a.moves.is_empty())
                .map(|a| TimelineEvent {
                    start: a.start_frame,
                    end: a.end_frame,
                    moves: a.move_set(),
                    blade: a.blade,
                })
                .collect(),
        }
    }
}

/// Several timelines in one CSV.
pub fn timelines_to_csv(timelines: &[ActionTimeline]) -> String {
    let mut s = String::from(TIMELINE_HEADER);
    s.push('\n');
    for t in timelines {
        t.append_rows(&mut s);
    }
    s
}

/// Parses timeline CSV; per-move confidences are not stored, so every move
/// of a row receives the row confidence.
pub fn parse_timelines(text: &str) -> Result<Vec<ActionTimeline>> {
    let mut out: Vec<ActionTimeline> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("clip_id")) {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected 7 columns ({TIMELINE_HEADER}), got {}", f.len()),
            });
        }
        let wrap = |e: String| Error::Parse { line: ln, message: e };
        let side: Side = f[1].parse().map_err(|e: Error| wrap(e.to_string()))?;
        let start: u64 = f[2].parse().map_err(|e| wrap(format!("start: {e}")))?;
        let end: u64 = f[3].parse().map_err(|e| wrap(format!("end: {e}")))?;
        if end < start {
            return Err(wrap(format!("end {end} precedes start {start}")));
        }
        let moves = if f[4].is_empty() {
            MoveSet::default()
        } else {
            MoveSet::parse_field(f[4]).map_err(|e| wrap(e.to_string()))?
        };
        let blade: BladeLine = f[5].parse().map_err(|e: Error| wrap(e.to_string()))?;
        let conf: f64 = f[6].parse().map_err(|e| wrap(format!("confidence: {e}")))?;
        let action = DetectedAction {
            start_frame: start,
            end_frame: end,
            moves: moves.iter().map(|m| (m, conf)).collect(),
            blade,
            blade_confidence: conf,
        };
        match out.iter_mut().find(|t| t.clip_id == f[0] && t.side == side) {
            Some(t) => t.actions.push(action),
            None => out.push(ActionTimeline {
                clip_id: f[0].to_string(),
                side,
                actions: vec![action],
            }),
        }
    }
    for t in &mut out {
        t.actions.sort_by_key(|a| (a.start_frame, a.end_frame));
    }
    Ok(out)
}

pub fn read_timelines(path: impl AsRef<Path>) -> Result<Vec<ActionTimeline>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_timelines(&text)
}

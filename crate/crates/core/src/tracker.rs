//! Fencer selection and two-track identity maintenance.
//!
//! Candidates are gated by size, detector confidence and (during the opening
//! grace period) contact with the bottom image edge, which is where referees
//! usually get cut off. Up to two tracks are spawned during the grace period
//! and then followed with a greedy IoU + centroid assignment. A track that has
//! lost its detection is re-identified by IoU against its last box, accepted
//! only when the pose still looks like the same fencer.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::features::normalize_skeleton;
use crate::pose::{PoseFrame, PoseHeader, PoseTrack};
use crate::types::{BoundingBox, Keypoint, Side, Skeleton17, NUM_KEYPOINTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Frames at the start of a clip during which tracks may be spawned.
    pub grace_frames: u64,
    pub min_area_fraction: f64,
    /// Detector confidence must be strictly above this.
    pub min_confidence: f64,
    /// A box whose bottom lies within this many pixels of the frame bottom touches the edge.
    pub bottom_margin_px: f64,
    pub weight_area: f64,
    pub weight_vertical: f64,
    /// Weight of `1 - IoU` in the association cost.
    pub alpha: f64,
    /// Weight of the diagonal-normalised centroid distance.
    pub beta: f64,
    pub gate: f64,
    pub reid_min_iou: f64,
    /// Mean normalised-joint distance (torso units) allowed on re-identification.
    pub pose_similarity_cap: f64,
    pub ema_lambda: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            grace_frames: 12,
            min_area_fraction: 0.03,
            min_confidence: 0.20,
            bottom_margin_px: 1.0,
            weight_area: 0.7,
            weight_vertical: 0.3,
            alpha: 0.5,
            beta: 0.5,
            gate: 0.8,
            reid_min_iou: 0.1,
            pose_similarity_cap: 0.5,
            ema_lambda: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FencerCandidate {
    pub bbox: BoundingBox,
    pub skeleton: Skeleton17,
    pub area_fraction: f64,
    pub score: f64,
}

fn geometry_key(b: &BoundingBox) -> [f64; 5] {
    [b.x_min, b.y_min, b.x_max, b.y_max, b.confidence]
}

fn cmp_geometry(a: &BoundingBox, b: &BoundingBox) -> Ordering {
    geometry_key(a)
        .iter()
        .zip(geometry_key(b).iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Gates and scores the candidates of one frame, best first.
pub fn filter_candidates(
    frame: &PoseFrame,
    frame_size: (u32, u32),
    grace_active: bool,
    cfg: &TrackerConfig,
) -> Vec<FencerCandidate> {
    let (w, h) = (frame_size.0 as f64, frame_size.1 as f64);
    let frame_area = w * h;
    let mut out: Vec<FencerCandidate> = frame
        .candidates
        .iter()
        .filter_map(|c| {
            let area_fraction = (c.bbox.area() / frame_area).clamp(0.0, 1.0);
            if area_fraction < cfg.min_area_fraction || c.bbox.confidence <= cfg.min_confidence {
                return None;
            }
            if grace_active && c.bbox.y_max >= h - cfg.bottom_margin_px {
                return None;
            }
            let vertical = (c.bbox.centroid()[1] / h).clamp(0.0, 1.0);
            Some(FencerCandidate {
                bbox: c.bbox,
                skeleton: c.skeleton,
                area_fraction,
                score: cfg.weight_area * area_fraction + cfg.weight_vertical * vertical,
            })
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| cmp_geometry(&a.bbox, &b.bbox)));
    out
}

/// Intersection over union; 0 when the union has no area.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Exponential smoothing of joint positions that holds the last value while
/// a joint (or the whole detection) is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEma {
    lambda: f64,
    state: Skeleton17,
    seen: [bool; NUM_KEYPOINTS],
}

impl JointEma {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            state: Skeleton17::unseen(),
            seen: [false; NUM_KEYPOINTS],
        }
    }

    pub fn current(&self) -> Skeleton17 {
        self.state
    }

    pub fn update(&mut self, obs: Option<&Skeleton17>) -> Skeleton17 {
        let Some(obs) = obs else {
            return self.state;
        };
        for (j, kp) in obs.joints.iter().enumerate() {
            if !kp.is_observed() {
                continue;
            }
            let prev = self.state.joints[j];
            let (x, y) = if self.seen[j] {
                (
                    self.lambda * kp.x + (1.0 - self.lambda) * prev.x,
                    self.lambda * kp.y + (1.0 - self.lambda) * prev.y,
                )
            } else {
                (kp.x, kp.y)
            };
            self.state.joints[j] = Keypoint::new(x, y, kp.confidence).expect("convex combination of valid keypoints");
            self.seen[j] = true;
        }
        self.state
    }
}

/// One EMA step: `λ·obs + (1−λ)·ema` for observed joints, hold otherwise.
pub fn ema_smooth(state: &mut JointEma, obs: Option<&Skeleton17>) -> Skeleton17 {
    state.update(obs)
}

#[derive(Debug, Clone)]
pub struct TrackState {
    pub track_id: u8,
    pub last_bbox: BoundingBox,
    pub last_skeleton: Skeleton17,
    pub ema: JointEma,
    pub frames_missing: u32,
}

impl TrackState {
    fn spawn(track_id: u8, cand: &FencerCandidate, lambda: f64) -> Self {
        Self {
            track_id,
            last_bbox: cand.bbox,
            last_skeleton: cand.skeleton,
            ema: JointEma::new(lambda),
            frames_missing: 0,
        }
    }
}

/// `α·(1 − IoU) + β·(centroid distance / frame diagonal)`.
pub fn association_distance(
    track: &TrackState,
    cand: &FencerCandidate,
    frame_diagonal: f64,
    cfg: &TrackerConfig,
) -> f64 {
    let [ax, ay] = track.last_bbox.centroid();
    let [bx, by] = cand.bbox.centroid();
    let dist = (ax - bx).hypot(ay - by);
    cfg.alpha * (1.0 - iou(&track.last_bbox, &cand.bbox)) + cfg.beta * dist / frame_diagonal
}

/// Mean distance between the 12 body joints of two skeletons in torso units;
/// infinite if either lacks a usable torso.
pub fn pose_distance(a: &Skeleton17, b: &Skeleton17) -> f64 {
    match (normalize_skeleton(a), normalize_skeleton(b)) {
        (Some(na), Some(nb)) => {
            na.joints
                .iter()
                .zip(&nb.joints)
                .map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1]))
                .sum::<f64>()
                / na.joints.len() as f64
        }
        _ => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub track_id: u8,
    pub candidate: Option<usize>,
    pub cost: Option<f64>,
    pub reidentified: bool,
}

/// Associates candidates to existing tracks for one frame and updates the
/// track states. Returns one assignment per track, in track order.
pub fn step_tracker(
    states: &mut [TrackState],
    cands: &[FencerCandidate],
    frame_diagonal: f64,
    cfg: &TrackerConfig,
) -> Vec<Assignment> {
    let mut taken = vec![false; cands.len()];
    let mut result: Vec<Option<(usize, f64, bool)>> = vec![None; states.len()];

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (si, s) in states.iter().enumerate() {
        if s.frames_missing > 0 {
            continue;
        }
        for (ci, c) in cands.iter().enumerate() {
            let cost = association_distance(s, c, frame_diagonal, cfg);
            if cost < cfg.gate {
                pairs.push((cost, si, ci));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(states[a.1].track_id.cmp(&states[b.1].track_id))
            .then_with(|| cmp_geometry(&cands[a.2].bbox, &cands[b.2].bbox))
    });
    for (cost, si, ci) in pairs {
        if result[si].is_none() && !taken[ci] {
            result[si] = Some((ci, cost, false));
            taken[ci] = true;
        }
    }

    // Lost tracks: best IoU against the last known box, vetted by pose.
    for (si, s) in states.iter().enumerate() {
        if s.frames_missing == 0 || result[si].is_some() {
            continue;
        }
        let best = cands
            .iter()
            .enumerate()
            .filter(|(ci, _)| !taken[*ci])
            .map(|(ci, c)| (ci, iou(&s.last_bbox, &c.bbox)))
            .filter(|&(_, v)| v >= cfg.reid_min_iou)
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| cmp_geometry(&cands[b.0].bbox, &cands[a.0].bbox)));
        if let Some((ci, _)) = best {
            if pose_distance(&s.last_skeleton, &cands[ci].skeleton) < cfg.pose_similarity_cap {
                let cost = association_distance(s, &cands[ci], frame_diagonal, cfg);
                result[si] = Some((ci, cost, true));
                taken[ci] = true;
            }
        }
    }

    states
        .iter_mut()
        .zip(result)
        .map(|(s, r)| match r {
            Some((ci, cost, reid)) => {
                s.last_bbox = cands[ci].bbox;
                s.last_skeleton = cands[ci].skeleton;
                s.frames_missing = 0;
                Assignment {
                    track_id: s.track_id,
                    candidate: Some(ci),
                    cost: Some(cost),
                    reidentified: reid,
                }
            }
            None => {
                s.frames_missing += 1;
                Assignment {
                    track_id: s.track_id,
                    candidate: None,
                    cost: None,
                    reidentified: false,
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrackingResult {
    pub left: PoseTrack,
    pub right: PoseTrack,
    /// Per-frame assignment log.
    pub report: String,
}

/// Runs selection, association and smoothing over a whole clip.
pub fn track_clip(header: &PoseHeader, frames: &[PoseFrame], cfg: &TrackerConfig) -> TrackingResult {
    let size = (header.width, header.height);
    let diag = (header.width as f64).hypot(header.height as f64);
    let (first, last) = match (frames.first(), frames.last()) {
        (Some(a), Some(b)) => (a.frame_index, b.frame_index),
        _ => (0, 0),
    };
    let n = if frames.is_empty() { 0 } else { (last - first + 1) as usize };

    let mut states: Vec<TrackState> = Vec::new();
    let mut observations: Vec<Vec<Option<Skeleton17>>> = Vec::new();
    let mut centroid_x: Vec<(f64, usize)> = Vec::new();
    let mut report = String::new();
    let empty = PoseFrame {
        frame_index: 0,
        candidates: Vec::new(),
    };
    let mut cursor = 0;

    for t in 0..n {
        let idx = first + t as u64;
        let frame = if cursor < frames.len() && frames[cursor].frame_index == idx {
            cursor += 1;
            &frames[cursor - 1]
        } else {
            &empty
        };
        let grace = (t as u64) < cfg.grace_frames;
        let cands = filter_candidates(frame, size, grace, cfg);
        let assignments = step_tracker(&mut states, &cands, diag, cfg);

        let _ = write!(report, "frame {idx}:");
        let mut taken: Vec<usize> = assignments.iter().filter_map(|a| a.candidate).collect();
        for a in &assignments {
            let si = a.track_id as usize;
            match a.candidate {
                Some(ci) => {
                    let smoothed = states[si].ema.update(Some(&cands[ci].skeleton));
                    observations[si].push(Some(smoothed));
                    centroid_x[si].0 += cands[ci].bbox.centroid()[0];
                    centroid_x[si].1 += 1;
                    let tag = if a.reidentified { " reid" } else { "" };
                    let _ = write!(report, " track{} <- cand{} cost {:.4}{};", a.track_id, ci, a.cost.unwrap_or(0.0), tag);
                }
                None => {
                    observations[si].push(None);
                    let _ = write!(report, " track{} lost({});", a.track_id, states[si].frames_missing);
                }
            }
        }
        if grace {
            for (ci, c) in cands.iter().enumerate() {
                if states.len() >= 2 {
                    break;
                }
                if taken.contains(&ci) {
                    continue;
                }
                let id = states.len() as u8;
                let mut st = TrackState::spawn(id, c, cfg.ema_lambda);
                let smoothed = st.ema.update(Some(&c.skeleton));
                states.push(st);
                let mut obs = vec![None; t];
                obs.push(Some(smoothed));
                observations.push(obs);
                centroid_x.push((c.bbox.centroid()[0], 1));
                taken.push(ci);
                let _ = write!(report, " spawn track{id} <- cand{ci} score {:.4};", c.score);
            }
        }
        report.push('\n');
    }

    let mean_x: Vec<f64> = centroid_x.iter().map(|&(s, k)| s / k.max(1) as f64).collect();
    let left_idx = match states.len() {
        0 => None,
        1 => (mean_x[0] < header.width as f64 / 2.0).then_some(0),
        _ => Some(if mean_x[0] <= mean_x[1] { 0 } else { 1 }),
    };
    let right_idx = match states.len() {
        0 => None,
        1 => left_idx.is_none().then_some(0),
        _ => Some(1 - left_idx.unwrap()),
    };
    let build = |side: Side, which: Option<usize>| {
        let obs = which.map(|i| observations[i].clone()).unwrap_or_else(|| vec![None; n]);
        PoseTrack::from_observations(header.clip_id.clone(), side, Some(size), header.fps, first, obs)
    };
    let _ = writeln!(
        report,
        "sides: left=track{} right=track{}",
        left_idx.map_or("-".into(), |i| i.to_string()),
        right_idx.map_or("-".into(), |i| i.to_string())
    );
    TrackingResult {
        left: build(Side::Left, left_idx),
        right: build(Side::Right, right_idx),
        report,
    }
}

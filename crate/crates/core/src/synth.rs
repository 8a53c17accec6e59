//! Parametric two-fencer motion generator with ground-truth labels.
//!
//! Every move is a piecewise-smooth offset pattern applied to a fixed en-garde
//! stance, authored in torso units for a fencer on the left facing +x. The
//! right fencer is rendered in the same canonical frame and mirrored, so both
//! sides share one set of templates. Geometry is label-consistent, not
//! realistic: each class moves a distinct set of joints in a distinct
//! direction relative to the pelvis.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::annotations::{AnnotatedSequence, AnnotationSegment};
use crate::error::{Error, Result};
use crate::pose::{Candidate, PoseFrame, PoseHeader, PoseTrack};
use crate::referee::{evaluate_priority, RuleBook, Verdict};
use crate::timeline::{align_pair, ExchangeTranscript, SideTimeline, TranscriptEvent};
use crate::types::{joint, BladeLine, Keypoint, MoveLabel, MoveSet, Side, Skeleton17, NUM_KEYPOINTS};

pub const FRAME_WIDTH: u32 = 1280;
pub const FRAME_HEIGHT: u32 = 720;
pub const FPS: f64 = 25.0;
/// Shoulder-hip length as a fraction of frame height.
pub const TORSO_FRACTION: f64 = 0.16;
pub const PELVIS_Y_FRACTION: f64 = 0.55;
/// Left fencer's starting pelvis x as a fraction of frame width.
pub const START_X_FRACTION: f64 = 0.3;
pub const JOINT_CONFIDENCE: f64 = 0.9;
pub const MIN_DURATION: u32 = 4;
pub const MAX_DURATION: u32 = 40;

/// Inclusive duration range in frames for a single move.
pub fn duration_range(m: MoveLabel) -> (u32, u32) {
    use MoveLabel::*;
    match m {
        StepForward | StepBackward => (10, 20),
        HalfStepForward | HalfStepBackward => (4, 6),
        Lunge => (30, 40),
        Fleche => (20, 30),
        Wait => (8, 20),
        Parry => (6, 12),
        Beat => (6, 10),
        Counterattack => (12, 24),
        Fake => (10, 18),
        Hit => (8, 14),
    }
}

/// The move whose duration governs a compound entry: the one with the
/// longest range.
pub fn dominant_move(moves: MoveSet) -> Option<MoveLabel> {
    moves.iter().max_by_key(|&m| {
        let (lo, hi) = duration_range(m);
        (hi, lo)
    })
}

/// One scripted action: a set of co-occurring moves held for one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub moves: MoveSet,
    pub blade: BladeLine,
    /// Fixed duration; sampled from the dominant move's range when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<u32>,
}

impl ScriptEntry {
    pub fn new(moves: &[MoveLabel], blade: BladeLine) -> Self {
        Self {
            moves: moves.iter().copied().collect(),
            blade,
            duration: None,
        }
    }

    pub fn with_duration(mut self, frames: u32) -> Self {
        self.duration = Some(frames);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.moves.is_empty() {
            return Err(Error::Invalid("script entry has no moves".into()));
        }
        let ms: Vec<MoveLabel> = self.moves.iter().collect();
        for (i, &a) in ms.iter().enumerate() {
            for &b in &ms[i + 1..] {
                if incompatible(a, b) {
                    return Err(Error::Invalid(format!(
                        "moves {} and {} cannot be performed together",
                        a.display_name(),
                        b.display_name()
                    )));
                }
            }
        }
        if let Some(d) = self.duration {
            if !(MIN_DURATION..=MAX_DURATION).contains(&d) {
                return Err(Error::Invalid(format!(
                    "duration {d} outside [{MIN_DURATION}, {MAX_DURATION}] frames"
                )));
            }
        }
        Ok(())
    }
}

fn incompatible(a: MoveLabel, b: MoveLabel) -> bool {
    use MoveLabel::*;
    let fwd = |m| matches!(m, StepForward | HalfStepForward | Lunge | Fleche);
    let back = |m| matches!(m, StepBackward | HalfStepBackward);
    let footwork = |m| fwd(m) || back(m);
    (fwd(a) && back(b))
        || (back(a) && fwd(b))
        || (footwork(a) && footwork(b))
        || a == Wait
        || b == Wait
        || matches!((a, b), (Parry, Beat) | (Beat, Parry))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthClipSpec {
    pub clip_id: String,
    pub seed: u64,
    pub left: Vec<ScriptEntry>,
    pub right: Vec<ScriptEntry>,
    /// Gaussian pixel noise on every joint coordinate.
    #[serde(default)]
    pub noise_px: f64,
    /// Per-frame, per-fencer probability of the detector missing the fencer.
    #[serde(default)]
    pub occlusion_prob: f64,
    /// Inclusive frame range the occlusion applies to; everywhere when absent.
    #[serde(default)]
    pub occlusion_frames: Option<(u64, u64)>,
}

impl SynthClipSpec {
    pub fn new(clip_id: impl Into<String>, seed: u64, left: Vec<ScriptEntry>, right: Vec<ScriptEntry>) -> Self {
        Self {
            clip_id: clip_id.into(),
            seed,
            left,
            right,
            noise_px: 0.0,
            occlusion_prob: 0.0,
            occlusion_frames: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.left.is_empty() || self.right.is_empty() {
            return Err(Error::Invalid("both scripts must be non-empty".into()));
        }
        for e in self.left.iter().chain(&self.right) {
            e.validate()?;
        }
        if !(self.noise_px >= 0.0 && self.noise_px.is_finite()) {
            return Err(Error::Invalid(format!("noise_px {} must be finite and >= 0", self.noise_px)));
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) {
            return Err(Error::Invalid(format!("occlusion_prob {} outside [0, 1]", self.occlusion_prob)));
        }
        Ok(())
    }
}

/// A script entry with its resolved frame range and amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedMove {
    pub entry: ScriptEntry,
    pub start: u64,
    pub end: u64,
    /// Per-instance amplitude factor, so repeated moves differ slightly.
    pub gain: f64,
}

/// Lays a script end to end from frame 0, sampling durations and gains.
pub fn plan_script<R: Rng + ?Sized>(script: &[ScriptEntry], rng: &mut R) -> Vec<PlannedMove> {
    let mut t = 0u64;
    script
        .iter()
        .map(|e| {
            let (lo, hi) = dominant_move(e.moves).map(duration_range).unwrap_or((8, 8));
            let d = e.duration.unwrap_or_else(|| rng.random_range(lo..=hi));
            let gain = rng.random_range(0.85..1.15);
            let p = PlannedMove {
                entry: *e,
                start: t,
                end: t + d as u64 - 1,
                gain,
            };
            t += d as u64;
            p
        })
        .collect()
}

pub fn plan_annotations(clip_id: &str, side: Side, plan: &[PlannedMove]) -> Result<AnnotatedSequence> {
    let segs = plan
        .iter()
        .map(|p| AnnotationSegment::new(p.start, p.end, p.entry.moves, p.entry.blade))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnnotatedSequence::new(clip_id, side, segs))
}

type Pose = [[f64; 2]; NUM_KEYPOINTS];

/// En-garde stance in torso units, pelvis at the origin, y down, facing +x.
/// The right arm and leg lead.
fn stance() -> Pose {
    let mut p = [[0.0; 2]; NUM_KEYPOINTS];
    p[joint::NOSE] = [0.25, -1.35];
    p[1] = [0.22, -1.42];
    p[2] = [0.28, -1.42];
    p[3] = [0.12, -1.38];
    p[4] = [0.18, -1.38];
    p[joint::L_SHOULDER] = [-0.15, -1.0];
    p[joint::R_SHOULDER] = [0.15, -1.0];
    p[joint::L_ELBOW] = [-0.45, -1.1];
    p[joint::R_ELBOW] = [0.55, -0.75];
    p[joint::L_WRIST] = [-0.55, -1.4];
    p[joint::R_WRIST] = [0.95, -0.8];
    p[joint::L_HIP] = [-0.1, 0.0];
    p[joint::R_HIP] = [0.1, 0.0];
    p[joint::L_KNEE] = [-0.35, 0.5];
    p[joint::R_KNEE] = [0.45, 0.45];
    p[joint::L_ANKLE] = [-0.55, 0.95];
    p[joint::R_ANKLE] = [0.5, 0.95];
    p
}

/// sin bump over [a, b], zero outside.
fn bump(phi: f64, a: f64, b: f64) -> f64 {
    if phi <= a || phi >= b {
        0.0
    } else {
        (std::f64::consts::PI * (phi - a) / (b - a)).sin()
    }
}

/// Smooth 0 -> 1 over [a, b].
fn ramp(phi: f64, a: f64, b: f64) -> f64 {
    let u = ((phi - a) / (b - a)).clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

fn add(p: &mut Pose, j: usize, dx: f64, dy: f64, g: f64) {
    p[j][0] += g * dx;
    p[j][1] += g * dy;
}

fn lean(p: &mut Pose, dx: f64, g: f64) {
    for j in [0, 1, 2, 3, 4, joint::L_SHOULDER, joint::R_SHOULDER] {
        add(p, j, dx, 0.0, g);
    }
    for j in [joint::L_ELBOW, joint::R_ELBOW, joint::L_WRIST, joint::R_WRIST] {
        add(p, j, 0.8 * dx, 0.0, g);
    }
}

/// Adds the offsets of `m` at phase `phi` in [0, 1].
fn apply_move(p: &mut Pose, m: MoveLabel, phi: f64, g: f64) {
    use joint::*;
    use MoveLabel::*;
    match m {
        StepForward => {
            let a = bump(phi, 0.0, 0.6);
            let b = bump(phi, 0.4, 1.0);
            add(p, R_ANKLE, 0.35 * a, -0.15 * a, g);
            add(p, R_KNEE, 0.2 * a, -0.1 * a, g);
            add(p, L_ANKLE, 0.3 * b, -0.1 * b, g);
            add(p, L_KNEE, 0.15 * b, 0.0, g);
            lean(p, 0.08 * bump(phi, 0.0, 1.0), g);
        }
        StepBackward => {
            let a = bump(phi, 0.0, 0.6);
            let b = bump(phi, 0.4, 1.0);
            add(p, L_ANKLE, -0.35 * a, -0.15 * a, g);
            add(p, L_KNEE, -0.2 * a, -0.1 * a, g);
            add(p, R_ANKLE, -0.3 * b, -0.1 * b, g);
            add(p, R_KNEE, -0.15 * b, 0.0, g);
            lean(p, -0.08 * bump(phi, 0.0, 1.0), g);
        }
        HalfStepForward => {
            let a = bump(phi, 0.0, 1.0);
            add(p, R_ANKLE, 0.25 * a, -0.2 * a, g);
            add(p, R_KNEE, 0.15 * a, -0.15 * a, g);
        }
        HalfStepBackward => {
            let a = bump(phi, 0.0, 1.0);
            add(p, L_ANKLE, -0.25 * a, -0.2 * a, g);
            add(p, L_KNEE, -0.15 * a, -0.15 * a, g);
        }
        Lunge => {
            let r = ramp(phi, 0.0, 0.6);
            add(p, R_ANKLE, 0.9 * r, 0.0, g);
            add(p, R_KNEE, 0.55 * r, 0.05 * r, g);
            add(p, L_KNEE, -0.25 * r, -0.15 * r, g);
            add(p, L_ANKLE, -0.2 * r, 0.0, g);
            add(p, R_ELBOW, 0.25 * r, -0.2 * r, g);
            add(p, R_WRIST, 0.45 * r, -0.25 * r, g);
            add(p, L_ELBOW, -0.1 * r, 0.5 * r, g);
            add(p, L_WRIST, -0.3 * r, 1.0 * r, g);
        }
        Fleche => {
            let r = ramp(phi, 0.0, 0.7);
            add(p, L_KNEE, 1.0 * r, -0.2 * r, g);
            add(p, L_ANKLE, 1.35 * r, -0.1 * r, g);
            add(p, R_KNEE, 0.1 * r, 0.0, g);
            lean(p, 0.4 * r, g);
            add(p, R_WRIST, 0.4 * r, -0.2 * r, g);
            add(p, R_ELBOW, 0.2 * r, -0.15 * r, g);
        }
        Wait => {
            let s = (2.0 * std::f64::consts::PI * phi).sin();
            for j in [L_KNEE, R_KNEE] {
                add(p, j, 0.0, 0.04 * s, g);
            }
        }
        Parry => {
            let a = bump(phi, 0.0, 1.0);
            add(p, R_WRIST, -0.3 * a, -0.35 * a, g);
            add(p, R_ELBOW, -0.1 * a, -0.1 * a, g);
        }
        Beat => {
            let a = bump(phi, 0.0, 1.0);
            add(p, R_WRIST, 0.2 * a, 0.35 * a, g);
            add(p, R_ELBOW, 0.05 * a, 0.1 * a, g);
        }
        Counterattack => {
            let r = ramp(phi, 0.0, 0.5);
            add(p, R_WRIST, 0.4 * r, -0.1 * r, g);
            add(p, R_ELBOW, 0.2 * r, -0.1 * r, g);
            lean(p, -0.2 * r, g);
            add(p, L_ANKLE, -0.15 * r, 0.0, g);
        }
        Fake => {
            let a = bump(phi, 0.0, 1.0);
            add(p, R_WRIST, 0.35 * a, 0.1 * a, g);
            add(p, R_ELBOW, 0.2 * a, 0.05 * a, g);
        }
        Hit => {
            let r = ramp(phi, 0.2, 0.8);
            add(p, R_WRIST, 0.2 * r, 0.2 * r, g);
        }
    }
}

/// Total forward travel of the pelvis over one move, in torso units.
fn travel(m: MoveLabel) -> f64 {
    use MoveLabel::*;
    match m {
        StepForward => 0.5,
        StepBackward => -0.5,
        HalfStepForward => 0.2,
        HalfStepBackward => -0.2,
        Lunge => 0.8,
        Fleche => 1.6,
        Counterattack => -0.1,
        _ => 0.0,
    }
}

fn blade_offset(b: BladeLine) -> [f64; 2] {
    match b {
        BladeLine::Four => [-0.1, -0.12],
        BladeLine::Six => [0.1, -0.12],
        BladeLine::Seven => [-0.1, 0.15],
        BladeLine::Eight => [0.1, 0.15],
        BladeLine::Other => [0.0, 0.0],
    }
}

/// Canonical-frame pixel skeleton at every frame of `0..total`.
fn render_canonical(plan: &[PlannedMove], total: u64) -> Vec<Pose> {
    let torso = TORSO_FRACTION * FRAME_HEIGHT as f64;
    let pelvis_y = PELVIS_Y_FRACTION * FRAME_HEIGHT as f64;
    let mut base_x = START_X_FRACTION * FRAME_WIDTH as f64;
    let mut out = Vec::with_capacity(total as usize);
    let mut k = 0usize;
    for t in 0..total {
        while k < plan.len() && t > plan[k].end {
            base_x += torso * plan[k].gain * plan[k].entry.moves.iter().map(travel).sum::<f64>();
            k += 1;
        }
        let mut p = stance();
        let mut dx = 0.0;
        if let Some(pm) = plan.get(k) {
            let len = (pm.end - pm.start + 1) as f64;
            let phi = (t - pm.start) as f64 / (len - 1.0).max(1.0);
            for m in pm.entry.moves.iter() {
                apply_move(&mut p, m, phi, pm.gain);
                dx += torso * pm.gain * travel(m) * ramp(phi, 0.0, 1.0);
            }
            let b = blade_offset(pm.entry.blade);
            add(&mut p, joint::R_WRIST, b[0], b[1], 1.0);
            add(&mut p, joint::R_ELBOW, 0.5 * b[0], 0.5 * b[1], 1.0);
        }
        for q in p.iter_mut() {
            *q = [base_x + dx + torso * q[0], pelvis_y + torso * q[1]];
        }
        out.push(p);
    }
    out
}

/// Renders one fencer's track. The script is drawn in the canonical frame
/// with noise and occlusion, then mirrored when `side` is right.
pub fn render_fencer(
    clip_id: &str,
    side: Side,
    plan: &[PlannedMove],
    total: u64,
    noise_px: f64,
    occlusion_prob: f64,
    occlusion_frames: Option<(u64, u64)>,
    rng: &mut ChaCha8Rng,
) -> Result<PoseTrack> {
    let noise = Normal::new(0.0, noise_px).map_err(|e| Error::Invalid(format!("noise_px: {e}")))?;
    let w = FRAME_WIDTH as f64;
    let mut obs = Vec::with_capacity(total as usize);
    for (t, pose) in render_canonical(plan, total).into_iter().enumerate() {
        let in_window = occlusion_frames.is_none_or(|(a, b)| (a..=b).contains(&(t as u64)));
        let occluded = occlusion_prob > 0.0 && in_window && rng.random::<f64>() < occlusion_prob;
        let mut joints = [Keypoint::default(); NUM_KEYPOINTS];
        for (kp, q) in joints.iter_mut().zip(pose) {
            let (nx, ny) = if noise_px > 0.0 {
                (noise.sample(rng), noise.sample(rng))
            } else {
                (0.0, 0.0)
            };
            *kp = Keypoint::new(q[0] + nx, q[1] + ny, JOINT_CONFIDENCE)?;
        }
        let sk = Skeleton17::new(joints);
        let sk = match side {
            Side::Left => sk,
            Side::Right => sk.mirrored(w),
        };
        obs.push((!occluded).then_some(sk));
    }
    Ok(PoseTrack::from_observations(
        clip_id,
        side,
        Some((FRAME_WIDTH, FRAME_HEIGHT)),
        FPS,
        0,
        obs,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBout {
    pub header: PoseHeader,
    /// Detector-style frames holding both fencers as candidates.
    pub frames: Vec<PoseFrame>,
    /// Ground-truth tracks, left then right.
    pub tracks: [PoseTrack; 2],
    pub annotations: [AnnotatedSequence; 2],
    pub transcript: ExchangeTranscript,
    /// Rule-engine verdict on the ground-truth transcript.
    pub verdict: Verdict,
}

fn candidate(sk: &Skeleton17, torso: f64) -> Option<Candidate> {
    let ext = sk.extent()?;
    let mut bbox = ext.padded(0.15 * torso);
    bbox.confidence = 0.9;
    Some(Candidate { bbox, skeleton: *sk })
}

/// Generates both fencers, the detector frames, the annotations and the
/// verdict. Deterministic in `spec.seed`.
pub fn generate_bout(spec: &SynthClipSpec) -> Result<SynthBout> {
    spec.validate()?;
    let mut plan_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let left_plan = plan_script(&spec.left, &mut plan_rng);
    let right_plan = plan_script(&spec.right, &mut plan_rng);
    let total = left_plan.last().unwrap().end.max(right_plan.last().unwrap().end) + 1;

    let mut tracks = Vec::with_capacity(2);
    for (stream, side, plan) in [(1u64, Side::Left, &left_plan), (2, Side::Right, &right_plan)] {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream);
        tracks.push(render_fencer(
            &spec.clip_id,
            side,
            plan,
            total,
            spec.noise_px,
            spec.occlusion_prob,
            spec.occlusion_frames,
            &mut rng,
        )?);
    }
    let right = tracks.pop().unwrap();
    let left = tracks.pop().unwrap();

    let torso = TORSO_FRACTION * FRAME_HEIGHT as f64;
    let frames = (0..total as usize)
        .map(|t| PoseFrame {
            frame_index: t as u64,
            candidates: [&left, &right]
                .iter()
                .filter(|tr| tr.frames[t].present)
                .filter_map(|tr| candidate(&tr.frames[t].skeleton, torso))
                .collect(),
        })
        .collect();

    let annotations = [
        plan_annotations(&spec.clip_id, Side::Left, &left_plan)?,
        plan_annotations(&spec.clip_id, Side::Right, &right_plan)?,
    ];
    let transcript = align_pair(
        &SideTimeline::from(&annotations[0]),
        &SideTimeline::from(&annotations[1]),
    )?;
    let verdict = evaluate_priority(&transcript, &RuleBook::foil())?;
    Ok(SynthBout {
        header: PoseHeader {
            clip_id: spec.clip_id.clone(),
            width: FRAME_WIDTH,
            height: FRAME_HEIGHT,
            fps: FPS,
            side: None,
        },
        frames,
        tracks: [left, right],
        annotations,
        transcript,
        verdict,
    })
}

/// Gaussian pixel noise on the present frames' observed joints, then
/// per-frame dropout with probability `dropout`.
pub fn corrupt(track: &PoseTrack, sigma: f64, dropout: f64, seed: u64) -> Result<PoseTrack> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Invalid(format!("noise sigma {sigma} must be finite and >= 0")));
    }
    if !(0.0..=1.0).contains(&dropout) {
        return Err(Error::Invalid(format!("dropout probability {dropout} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut obs = Vec::with_capacity(track.frames.len());
    for f in &track.frames {
        let drop = dropout > 0.0 && rng.random::<f64>() < dropout;
        if !f.present || drop {
            obs.push(None);
            continue;
        }
        let mut sk = f.skeleton;
        if sigma > 0.0 {
            for kp in sk.joints.iter_mut().filter(|k| k.is_observed()) {
                *kp = Keypoint::new(kp.x + noise.sample(&mut rng), kp.y + noise.sample(&mut rng), kp.confidence)?;
            }
        }
        obs.push(Some(sk));
    }
    let mut out = PoseTrack::from_observations(
        track.clip_id.clone(),
        track.side,
        track.frame_size,
        track.fps,
        track.first_frame().unwrap_or(0),
        obs,
    );
    // Leading absent frames keep the input's placeholder skeletons.
    for (o, i) in out.frames.iter_mut().zip(&track.frames) {
        if !o.present && o.skeleton == Skeleton17::unseen() {
            o.skeleton = i.skeleton;
        }
    }
    Ok(out)
}

/// Compound moves the random script generator may emit.
const COMPOUNDS: [&[MoveLabel]; 6] = [
    &[MoveLabel::StepForward, MoveLabel::Beat],
    &[MoveLabel::StepForward, MoveLabel::Fake],
    &[MoveLabel::Lunge, MoveLabel::Hit],
    &[MoveLabel::Fleche, MoveLabel::Hit],
    &[MoveLabel::Counterattack, MoveLabel::Hit],
    &[MoveLabel::HalfStepForward, MoveLabel::Fake],
];

/// A random script of `len` entries over `vocabulary`. With `compounds`, an
/// entry is occasionally replaced by a multi-label combination.
pub fn random_script<R: Rng + ?Sized>(
    vocabulary: &[MoveLabel],
    len: usize,
    compounds: bool,
    rng: &mut R,
) -> Vec<ScriptEntry> {
    (0..len)
        .map(|_| {
            let blade = BladeLine::ALL[rng.random_range(0..BladeLine::ALL.len())];
            if compounds && rng.random::<f64>() < 0.25 {
                let c = COMPOUNDS[rng.random_range(0..COMPOUNDS.len())];
                ScriptEntry::new(c, blade)
            } else {
                let m = vocabulary[rng.random_range(0..vocabulary.len())];
                ScriptEntry::new(&[m], blade)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub clips: usize,
    pub moves_per_side: usize,
    /// Move classes drawn for single-label entries.
    pub vocabulary: Vec<MoveLabel>,
    /// Also emit multi-label combinations.
    pub compounds: bool,
    pub noise_px: f64,
    pub occlusion_prob: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            clips: 20,
            moves_per_side: 6,
            vocabulary: MoveLabel::ALL.to_vec(),
            compounds: true,
            noise_px: 1.0,
            occlusion_prob: 0.0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clips == 0 || self.moves_per_side == 0 {
            return Err(Error::Invalid("synth.clips and synth.moves_per_side must be positive".into()));
        }
        if self.vocabulary.is_empty() {
            return Err(Error::Invalid("synth.vocabulary must not be empty".into()));
        }
        Ok(())
    }
}

/// Clip specs `synth_000`, `synth_001`, ... with random scripts.
pub fn corpus_specs(cfg: &CorpusConfig, seed: u64) -> Result<Vec<SynthClipSpec>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..cfg.clips)
        .map(|i| {
            let left = random_script(&cfg.vocabulary, cfg.moves_per_side, cfg.compounds, &mut rng);
            let right = random_script(&cfg.vocabulary, cfg.moves_per_side, cfg.compounds, &mut rng);
            SynthClipSpec {
                clip_id: format!("synth_{i:03}"),
                seed: rng.next_u64(),
                left,
                right,
                noise_px: cfg.noise_px,
                occlusion_prob: cfg.occlusion_prob,
                occlusion_frames: None,
            }
        })
        .collect())
}

pub fn generate_corpus(cfg: &CorpusConfig, seed: u64) -> Result<Vec<SynthBout>> {
    corpus_specs(cfg, seed)?.iter().map(generate_bout).collect()
}

/// A random two-fencer transcript laid out like a generated bout, for
/// exercising the rule engine without rendering skeletons.
pub fn random_transcript<R: Rng + ?Sized>(clip_id: &str, len: usize, rng: &mut R) -> ExchangeTranscript {
    let mut events = Vec::new();
    for side in [Side::Left, Side::Right] {
        let script = random_script(&MoveLabel::ALL, len, true, rng);
        for p in plan_script(&script, rng) {
            events.push(TranscriptEvent {
                side,
                start: p.start,
                end: p.end,
                moves: p.entry.moves,
                blade: p.entry.blade,
            });
        }
    }
    ExchangeTranscript::new(clip_id, events)
}

//! Kinematic feature extraction: pelvis-centred, torso-normalised joints and
//! the derived 101-D per-frame descriptor.
//!
//! Frame layout (offsets into [`FeatureFrame`]):
//!
//! | range      | content                                                   |
//! |------------|-----------------------------------------------------------|
//! | `0..24`    | 12 body joints, (x, y) interleaved, COCO order 5..=16      |
//! | `24..26`   | centre of mass                                            |
//! | `26..37`   | 11 pairwise distances ([`DISTANCE_PAIRS`])                |
//! | `37..41`   | angles: left elbow, right elbow, left knee, right knee    |
//! | `41..43`   | torso orientation (sin, cos) against the image vertical   |
//! | `43..49`   | per arm: shoulder–wrist magnitude, unit direction (x, y)  |
//! | `49..73`   | joint velocities                                          |
//! | `73..97`   | joint accelerations                                       |
//! | `97..101`  | CoM velocity (x, y), CoM acceleration (x, y)              |

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pose::{to_canonical, PoseTrack};
use crate::types::{joint, Side, Skeleton17, NUM_BODY_JOINTS};

pub const FEATURE_DIM: usize = 101;
pub const RAW_JOINT_DIM: usize = 24;
/// Degeneracy threshold for torso length, segment lengths and arm vectors.
pub const EPS: f64 = 1e-6;

pub const BLOCK_JOINTS: std::ops::Range<usize> = 0..24;
pub const BLOCK_COM: std::ops::Range<usize> = 24..26;
pub const BLOCK_DISTANCES: std::ops::Range<usize> = 26..37;
pub const BLOCK_ANGLES: std::ops::Range<usize> = 37..41;
pub const BLOCK_TORSO: std::ops::Range<usize> = 41..43;
pub const BLOCK_ARMS: std::ops::Range<usize> = 43..49;
pub const BLOCK_VELOCITY: std::ops::Range<usize> = 49..73;
pub const BLOCK_ACCELERATION: std::ops::Range<usize> = 73..97;
pub const BLOCK_COM_DYNAMICS: std::ops::Range<usize> = 97..101;

/// Distance pairs as COCO indices: hands, feet, shoulder and hip widths,
/// elbows, knees, then hand-to-leg spans.
pub const DISTANCE_PAIRS: [(usize, usize); 11] = [
    (joint::L_WRIST, joint::R_WRIST),
    (joint::L_ANKLE, joint::R_ANKLE),
    (joint::L_SHOULDER, joint::R_SHOULDER),
    (joint::L_HIP, joint::R_HIP),
    (joint::L_ELBOW, joint::R_ELBOW),
    (joint::L_KNEE, joint::R_KNEE),
    (joint::L_WRIST, joint::L_ANKLE),
    (joint::R_WRIST, joint::R_ANKLE),
    (joint::L_WRIST, joint::R_ANKLE),
    (joint::R_WRIST, joint::L_ANKLE),
    (joint::L_WRIST, joint::L_HIP),
];

/// (a, vertex, c) triples for the elbow and knee angles.
pub const ANGLE_TRIPLES: [(usize, usize, usize); 4] = [
    (joint::L_SHOULDER, joint::L_ELBOW, joint::L_WRIST),
    (joint::R_SHOULDER, joint::R_ELBOW, joint::R_WRIST),
    (joint::L_HIP, joint::L_KNEE, joint::L_ANKLE),
    (joint::R_HIP, joint::R_KNEE, joint::R_ANKLE),
];

/// Position of a COCO body joint (5..=16) in the 12-joint arrays.
pub const fn body(coco: usize) -> usize {
    coco - 5
}

pub type Point = [f64; 2];

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// Body joints in torso units with the pelvis midpoint at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedSkeleton {
    pub joints: [Point; NUM_BODY_JOINTS],
    /// Joints that were observed (confidence > 0) in the source skeleton.
    pub observed: [bool; NUM_BODY_JOINTS],
}

impl NormalizedSkeleton {
    pub fn joint(&self, coco: usize) -> Point {
        self.joints[body(coco)]
    }

    /// Mean of observed joints (all joints if none is flagged observed).
    pub fn center_of_mass(&self) -> Point {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (p, &ok) in self.joints.iter().zip(&self.observed) {
            if ok {
                sx += p[0];
                sy += p[1];
                n += 1;
            }
        }
        if n == 0 {
            return [0.0, 0.0];
        }
        [sx / n as f64, sy / n as f64]
    }

    /// Applies `f` to every joint position.
    pub fn map(&self, f: impl Fn(Point) -> Point) -> Self {
        let mut out = *self;
        for p in out.joints.iter_mut() {
            *p = f(*p);
        }
        out
    }
}

/// Centres on the hip midpoint and divides by the mean shoulder–hip length.
/// Returns `None` when torso joints are missing or the torso is degenerate.
pub fn normalize_skeleton(s: &Skeleton17) -> Option<NormalizedSkeleton> {
    if !s.has_torso() {
        return None;
    }
    let p = |j: usize| s.joints[j].xy();
    let pelvis = [
        0.5 * (p(joint::L_HIP)[0] + p(joint::R_HIP)[0]),
        0.5 * (p(joint::L_HIP)[1] + p(joint::R_HIP)[1]),
    ];
    let torso = 0.5
        * (norm(sub(p(joint::L_SHOULDER), p(joint::L_HIP))) + norm(sub(p(joint::R_SHOULDER), p(joint::R_HIP))));
    if torso.is_nan() || torso < EPS {
        return None;
    }
    let mut joints = [[0.0; 2]; NUM_BODY_JOINTS];
    let mut observed = [false; NUM_BODY_JOINTS];
    for i in 0..NUM_BODY_JOINTS {
        let kp = s.joints[i + 5];
        joints[i] = [(kp.x - pelvis[0]) / torso, (kp.y - pelvis[1]) / torso];
        observed[i] = kp.is_observed();
    }
    Some(NormalizedSkeleton { joints, observed })
}

/// Angle at `b` between rays to `a` and `c`, in [0, π]. The flag is set when
/// either ray is shorter than [`EPS`]; the angle is then 0.
pub fn joint_angle(a: Point, b: Point, c: Point) -> (f64, bool) {
    let u = sub(a, b);
    let v = sub(c, b);
    let (nu, nv) = (norm(u), norm(v));
    if nu < EPS || nv < EPS {
        return (0.0, true);
    }
    let cos = ((u[0] * v[0] + u[1] * v[1]) / (nu * nv)).clamp(-1.0, 1.0);
    (cos.acos(), false)
}

/// First and second backward differences. A difference that reaches into a
/// missing frame (or before the start) is zero.
pub fn temporal_derivatives<const N: usize>(seq: &[Option<[Point; N]>]) -> (Vec<[Point; N]>, Vec<[Point; N]>) {
    let t_len = seq.len();
    let mut vel = vec![[[0.0; 2]; N]; t_len];
    let mut acc = vec![[[0.0; 2]; N]; t_len];
    for t in 1..t_len {
        if let (Some(cur), Some(prev)) = (&seq[t], &seq[t - 1]) {
            for j in 0..N {
                vel[t][j] = sub(cur[j], prev[j]);
            }
            for j in 0..N {
                acc[t][j] = sub(vel[t][j], vel[t - 1][j]);
            }
        }
    }
    (vel, acc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureFrame(pub [f64; FEATURE_DIM]);

impl FeatureFrame {
    pub fn zeros() -> Self {
        FeatureFrame([0.0; FEATURE_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Static (per-frame) part of the descriptor and whether any angle degenerated.
fn static_block(ns: &NormalizedSkeleton, out: &mut [f64; FEATURE_DIM]) -> bool {
    for (i, p) in ns.joints.iter().enumerate() {
        out[2 * i] = p[0];
        out[2 * i + 1] = p[1];
    }
    let com = ns.center_of_mass();
    out[BLOCK_COM.start] = com[0];
    out[BLOCK_COM.start + 1] = com[1];
    for (k, &(a, b)) in DISTANCE_PAIRS.iter().enumerate() {
        out[BLOCK_DISTANCES.start + k] = norm(sub(ns.joint(a), ns.joint(b)));
    }
    let mut degenerate = false;
    for (k, &(a, b, c)) in ANGLE_TRIPLES.iter().enumerate() {
        let (theta, flag) = joint_angle(ns.joint(a), ns.joint(b), ns.joint(c));
        out[BLOCK_ANGLES.start + k] = theta;
        degenerate |= flag;
    }
    let mid = |a: usize, b: usize| {
        let (pa, pb) = (ns.joint(a), ns.joint(b));
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    };
    // Shoulder centre to hip centre, measured from the downward image axis.
    let axis = sub(mid(joint::L_HIP, joint::R_HIP), mid(joint::L_SHOULDER, joint::R_SHOULDER));
    let len = norm(axis);
    let (sin, cos) = if len < EPS {
        (0.0, 0.0)
    } else {
        (axis[0] / len, axis[1] / len)
    };
    out[BLOCK_TORSO.start] = sin;
    out[BLOCK_TORSO.start + 1] = cos;
    for (k, &(sh, wr)) in [(joint::L_SHOULDER, joint::L_WRIST), (joint::R_SHOULDER, joint::R_WRIST)]
        .iter()
        .enumerate()
    {
        let v = sub(ns.joint(wr), ns.joint(sh));
        let m = norm(v);
        let base = BLOCK_ARMS.start + 3 * k;
        out[base] = m;
        if m >= EPS {
            out[base + 1] = v[0] / m;
            out[base + 2] = v[1] / m;
        }
    }
    degenerate
}

/// Per-frame features computed from normalised skeletons.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub frames: Vec<FeatureFrame>,
    pub valid_mask: Vec<bool>,
    pub degenerate: Vec<bool>,
}

pub fn features_from_normalized(seq: &[Option<NormalizedSkeleton>]) -> FrameFeatures {
    const POINTS: usize = NUM_BODY_JOINTS + 1;
    let points: Vec<Option<[Point; POINTS]>> = seq
        .iter()
        .map(|ns| {
            ns.as_ref().map(|ns| {
                let mut pts = [[0.0; 2]; POINTS];
                pts[..NUM_BODY_JOINTS].copy_from_slice(&ns.joints);
                pts[NUM_BODY_JOINTS] = ns.center_of_mass();
                pts
            })
        })
        .collect();
    let (vel, acc) = temporal_derivatives(&points);
    let mut frames = Vec::with_capacity(seq.len());
    let mut valid_mask = Vec::with_capacity(seq.len());
    let mut degenerate = Vec::with_capacity(seq.len());
    for (t, ns) in seq.iter().enumerate() {
        let Some(ns) = ns else {
            frames.push(FeatureFrame::zeros());
            valid_mask.push(false);
            degenerate.push(false);
            continue;
        };
        let mut f = [0.0; FEATURE_DIM];
        degenerate.push(static_block(ns, &mut f));
        for j in 0..NUM_BODY_JOINTS {
            f[BLOCK_VELOCITY.start + 2 * j] = vel[t][j][0];
            f[BLOCK_VELOCITY.start + 2 * j + 1] = vel[t][j][1];
            f[BLOCK_ACCELERATION.start + 2 * j] = acc[t][j][0];
            f[BLOCK_ACCELERATION.start + 2 * j + 1] = acc[t][j][1];
        }
        let c = BLOCK_COM_DYNAMICS.start;
        f[c] = vel[t][NUM_BODY_JOINTS][0];
        f[c + 1] = vel[t][NUM_BODY_JOINTS][1];
        f[c + 2] = acc[t][NUM_BODY_JOINTS][0];
        f[c + 3] = acc[t][NUM_BODY_JOINTS][1];
        frames.push(FeatureFrame(f));
        valid_mask.push(true);
    }
    FrameFeatures {
        frames,
        valid_mask,
        degenerate,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub clip_id: String,
    pub side: Side,
    /// Clip frame number of `frames[0]`.
    pub first_frame: u64,
    pub frames: Vec<FeatureFrame>,
    pub valid_mask: Vec<bool>,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn normalize_track(track: &PoseTrack) -> Vec<Option<NormalizedSkeleton>> {
    track.frames.iter().map(|f| normalize_skeleton(&f.skeleton)).collect()
}

/// Features of a track taken as-is (the caller is responsible for the
/// canonical left view).
pub fn assemble_features(track: &PoseTrack) -> FeatureSequence {
    let ff = features_from_normalized(&normalize_track(track));
    FeatureSequence {
        clip_id: track.clip_id.clone(),
        side: track.side,
        first_frame: track.first_frame().unwrap_or(0),
        frames: ff.frames,
        valid_mask: ff.valid_mask,
    }
}

/// Mirrors right-side tracks into the canonical view, then extracts features.
/// The returned sequence keeps the fencer's original side.
pub fn features_for_fencer(track: &PoseTrack) -> Result<FeatureSequence> {
    let canonical = to_canonical(track)?;
    let mut seq = assemble_features(&canonical);
    seq.side = track.side;
    Ok(seq)
}

/// Which part of the descriptor is fed to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    #[default]
    Full,
    /// The 24 normalised joint coordinates only.
    RawJoints,
}

impl FeatureSubset {
    pub fn dim(self) -> usize {
        match self {
            FeatureSubset::Full => FEATURE_DIM,
            FeatureSubset::RawJoints => RAW_JOINT_DIM,
        }
    }

    pub fn select(self, f: &FeatureFrame) -> &[f64] {
        &f.0[..self.dim()]
    }
}

const FEATURE_MAGIC: &[u8; 8] = b"RPFEAT01";

/// Little-endian binary encoding: magic, clip id, side, first frame, frame
/// count, dimension, validity bytes, then `f32` values row by row.
pub fn encode_features(seq: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + seq.len() * (1 + 4 * FEATURE_DIM));
    out.extend_from_slice(FEATURE_MAGIC);
    let id = seq.clip_id.as_bytes();
    out.extend_from_slice(&(id.len() as u16).to_le_bytes());
    out.extend_from_slice(id);
    out.push(seq.side.index() as u8);
    out.extend_from_slice(&seq.first_frame.to_le_bytes());
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.extend_from_slice(&(FEATURE_DIM as u32).to_le_bytes());
    out.extend(seq.valid_mask.iter().map(|&v| v as u8));
    for f in &seq.frames {
        for v in f.0 {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSequence> {
    let bad = |m: &str| Error::Structure(format!("feature file: {m}"));
    let mut cur = Cursor::new(bytes);
    let mut take = |n: usize| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        cur.read_exact(&mut buf).map_err(|_| bad("truncated"))?;
        Ok(buf)
    };
    if take(8)?.as_slice() != FEATURE_MAGIC {
        return Err(bad("bad magic"));
    }
    let id_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
    let clip_id = String::from_utf8(take(id_len)?).map_err(|_| bad("clip id is not UTF-8"))?;
    let side = match take(1)?[0] {
        0 => Side::Left,
        1 => Side::Right,
        _ => return Err(bad("bad side byte")),
    };
    let first_frame = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if dim != FEATURE_DIM {
        return Err(bad(&format!("dimension {dim}, expected {FEATURE_DIM}")));
    }
    let valid_mask = take(n)?.into_iter().map(|b| b != 0).collect();
    let data = take(n * dim * 4)?;
    let frames = data
        .chunks_exact(dim * 4)
        .map(|row| {
            let mut f = [0.0; FEATURE_DIM];
            for (slot, b) in f.iter_mut().zip(row.chunks_exact(4)) {
                *slot = f32::from_le_bytes(b.try_into().unwrap()) as f64;
            }
            FeatureFrame(f)
        })
        .collect();
    Ok(FeatureSequence {
        clip_id,
        side,
        first_frame,
        frames,
        valid_mask,
    })
}

pub fn write_features(path: impl AsRef<Path>, seq: &FeatureSequence) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_features(seq)).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    decode_features(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Debug export: `frame,valid,f0,...,f100`.
pub fn features_to_csv(seq: &FeatureSequence) -> String {
    let mut out = String::from("frame,valid");
    for i in 0..FEATURE_DIM {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for (t, (f, v)) in seq.frames.iter().zip(&seq.valid_mask).enumerate() {
        out.push_str(&format!("{},{}", seq.first_frame + t as u64, *v as u8));
        for x in f.0 {
            out.push_str(&format!(",{}", x as f32));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Keypoint, NUM_KEYPOINTS};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn skeleton_from(points: &[(usize, f64, f64)]) -> Skeleton17 {
        let mut joints = [Keypoint::default(); NUM_KEYPOINTS];
        for (i, j) in joints.iter_mut().enumerate() {
            *j = Keypoint::new(i as f64 * 0.37 + 1.0, i as f64 * 0.11 + 0.5, 0.9).unwrap();
        }
        for &(j, x, y) in points {
            joints[j] = Keypoint::new(x, y, 1.0).unwrap();
        }
        Skeleton17::new(joints)
    }

    fn unit_torso(extra: &[(usize, f64, f64)]) -> Skeleton17 {
        let mut pts = vec![
            (joint::L_HIP, 0.0, 0.0),
            (joint::R_HIP, 2.0, 0.0),
            (joint::L_SHOULDER, 0.0, 2.0),
            (joint::R_SHOULDER, 2.0, 2.0),
        ];
        pts.extend_from_slice(extra);
        skeleton_from(&pts)
    }

    #[test]
    fn normalization_worked_example() {
        let ns = normalize_skeleton(&unit_torso(&[(joint::L_KNEE, 3.0, 2.0), (joint::R_KNEE, 1.0, 0.0)])).unwrap();
        assert_eq!(ns.joint(joint::L_KNEE), [1.0, 1.0]);
        assert_eq!(ns.joint(joint::R_KNEE), [0.0, 0.0]);
    }

    #[test]
    fn normalization_scale_translation_invariant() {
        let s = unit_torso(&[(joint::L_WRIST, 3.3, -1.7)]);
        let mut moved = s;
        for kp in moved.joints.iter_mut() {
            *kp = Keypoint::new(kp.x * 3.0 + 40.0, kp.y * 3.0 - 7.0, kp.confidence).unwrap();
        }
        let (a, b) = (normalize_skeleton(&s).unwrap(), normalize_skeleton(&moved).unwrap());
        for (p, q) in a.joints.iter().zip(&b.joints) {
            assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_torso_is_invalid() {
        let s = skeleton_from(&[
            (joint::L_HIP, 1.0, 1.0),
            (joint::R_HIP, 1.0, 1.0),
            (joint::L_SHOULDER, 1.0, 1.0),
            (joint::R_SHOULDER, 1.0, 1.0),
        ]);
        assert!(normalize_skeleton(&s).is_none());
        let mut missing = unit_torso(&[]);
        missing.joints[joint::L_HIP].confidence = 0.0;
        assert!(normalize_skeleton(&missing).is_none());
    }

    #[test]
    fn angle_examples() {
        assert!((joint_angle([1.0, 0.0], [0.0, 0.0], [0.0, 1.0]).0 - FRAC_PI_2).abs() < 1e-15);
        assert!((joint_angle([1.0, 0.0], [0.0, 0.0], [-3.0, 0.0]).0 - PI).abs() < 1e-15);
        assert!((joint_angle([1.0, 0.0], [0.0, 0.0], [1.0, 1.0]).0 - FRAC_PI_4).abs() < 1e-15);
        assert_eq!(joint_angle([0.0, 0.0], [0.0, 0.0], [1.0, 1.0]), (0.0, true));
    }

    #[test]
    fn derivative_boundary_rules() {
        let seq: Vec<Option<[Point; 1]>> = [0.0, 1.0, 3.0].iter().map(|&x| Some([[x, 0.0]])).collect();
        let (v, a) = temporal_derivatives(&seq);
        let vx: Vec<f64> = v.iter().map(|p| p[0][0]).collect();
        let ax: Vec<f64> = a.iter().map(|p| p[0][0]).collect();
        assert_eq!(vx, vec![0.0, 1.0, 2.0]);
        assert_eq!(ax, vec![0.0, 1.0, 1.0]);

        let single: Vec<Option<[Point; 1]>> = vec![Some([[5.0, 5.0]])];
        let (v, a) = temporal_derivatives(&single);
        assert_eq!((v[0], a[0]), ([[0.0, 0.0]], [[0.0, 0.0]]));

        let constant: Vec<Option<[Point; 1]>> = vec![Some([[2.0, 1.0]]); 6];
        let (v, a) = temporal_derivatives(&constant);
        assert!(v.iter().chain(&a).all(|p| p[0] == [0.0, 0.0]));
    }

    #[test]
    fn gap_resets_derivatives() {
        let seq: Vec<Option<[Point; 1]>> = vec![Some([[0.0, 0.0]]), None, Some([[4.0, 0.0]]), Some([[5.0, 0.0]])];
        let (v, a) = temporal_derivatives(&seq);
        assert_eq!(v[2][0], [0.0, 0.0]);
        assert_eq!(v[3][0], [1.0, 0.0]);
        assert_eq!(a[3][0], [1.0, 0.0]);
    }

    #[test]
    fn horizontal_unit_arm() {
        // Torso length 2 px, so a 2 px arm is one torso unit.
        let s = unit_torso(&[(joint::R_WRIST, 4.0, 2.0), (joint::L_WRIST, -2.0, 2.0)]);
        let ff = features_from_normalized(&[normalize_skeleton(&s)]);
        let f = &ff.frames[0].0;
        assert_eq!(&f[BLOCK_ARMS], &[1.0, -1.0, 0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn block_sizes_sum_to_101() {
        let blocks = [
            BLOCK_JOINTS,
            BLOCK_COM,
            BLOCK_DISTANCES,
            BLOCK_ANGLES,
            BLOCK_TORSO,
            BLOCK_ARMS,
            BLOCK_VELOCITY,
            BLOCK_ACCELERATION,
            BLOCK_COM_DYNAMICS,
        ];
        let sizes: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![24, 2, 11, 4, 2, 6, 24, 24, 4]);
        assert_eq!(sizes.iter().sum::<usize>(), FEATURE_DIM);
        for w in blocks.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
    }

    #[test]
    fn upright_torso_orientation() {
        // image y grows downward: shoulders above hips
        let s = skeleton_from(&[
            (joint::L_HIP, 0.0, 10.0),
            (joint::R_HIP, 2.0, 10.0),
            (joint::L_SHOULDER, 0.0, 0.0),
            (joint::R_SHOULDER, 2.0, 0.0),
        ]);
        let ff = features_from_normalized(&[normalize_skeleton(&s)]);
        assert_eq!(&ff.frames[0].0[BLOCK_TORSO], &[0.0, 1.0]);
    }

    #[test]
    fn invalid_frames_are_zero_and_masked() {
        let ff = features_from_normalized(&[None, normalize_skeleton(&unit_torso(&[]))]);
        assert_eq!(ff.valid_mask, vec![false, true]);
        assert!(ff.frames[0].0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn binary_round_trip_is_f32_exact() {
        let ff = features_from_normalized(&[normalize_skeleton(&unit_torso(&[])), None]);
        let seq = FeatureSequence {
            clip_id: "abc".into(),
            side: Side::Right,
            first_frame: 17,
            frames: ff.frames,
            valid_mask: ff.valid_mask,
        };
        let back = decode_features(&encode_features(&seq)).unwrap();
        assert_eq!(back.clip_id, "abc");
        assert_eq!(back.side, Side::Right);
        assert_eq!(back.first_frame, 17);
        assert_eq!(back.valid_mask, seq.valid_mask);
        for (a, b) in seq.frames.iter().zip(&back.frames) {
            for (x, y) in a.0.iter().zip(&b.0) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
        assert!(decode_features(&encode_features(&seq)[..20]).is_err());
    }
}

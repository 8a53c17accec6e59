//! Domain vocabulary shared by every stage: skeletons, sides, move and blade labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of COCO keypoints delivered by the pose detector.
pub const NUM_KEYPOINTS: usize = 17;
/// Body joints kept after dropping the five head keypoints (COCO 5..=16).
pub const NUM_BODY_JOINTS: usize = 12;
pub const NUM_MOVES: usize = 12;
pub const NUM_BLADES: usize = 5;

/// Pixel coordinates are stored on a 2^-30 px lattice. For any integer frame
/// width below 2^20 the reflection `W - x` of a lattice point is exactly
/// representable, which makes mirroring a bit-exact involution.
const LATTICE: f64 = (1u64 << 30) as f64;

pub(crate) fn snap(v: f64) -> f64 {
    (v * LATTICE).round() / LATTICE
}

/// COCO joint indices.
pub mod joint {
    pub const NOSE: usize = 0;
    pub const L_SHOULDER: usize = 5;
    pub const R_SHOULDER: usize = 6;
    pub const L_ELBOW: usize = 7;
    pub const R_ELBOW: usize = 8;
    pub const L_WRIST: usize = 9;
    pub const R_WRIST: usize = 10;
    pub const L_HIP: usize = 11;
    pub const R_HIP: usize = 12;
    pub const L_KNEE: usize = 13;
    pub const R_KNEE: usize = 14;
    pub const L_ANKLE: usize = 15;
    pub const R_ANKLE: usize = 16;

    /// Anatomical left/right pairs, swapped on horizontal mirroring.
    pub const SYMMETRIC_PAIRS: [(usize, usize); 8] = [
        (1, 2),
        (3, 4),
        (L_SHOULDER, R_SHOULDER),
        (L_ELBOW, R_ELBOW),
        (L_WRIST, R_WRIST),
        (L_HIP, R_HIP),
        (L_KNEE, R_KNEE),
        (L_ANKLE, R_ANKLE),
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    /// Builds a keypoint, snapping coordinates to the storage lattice.
    pub fn new(x: f64, y: f64, confidence: f64) -> Result<Self, Error> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Invalid(format!("non-finite keypoint ({x}, {y})")));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Invalid(format!(
                "keypoint confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            x: snap(x),
            y: snap(y),
            confidence,
        })
    }

    pub fn is_observed(&self) -> bool {
        self.confidence > 0.0
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// 17 keypoints in COCO order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Skeleton17 {
    pub joints: [Keypoint; NUM_KEYPOINTS],
}

impl Skeleton17 {
    pub fn new(joints: [Keypoint; NUM_KEYPOINTS]) -> Self {
        Self { joints }
    }

    pub fn from_slice(joints: &[Keypoint]) -> Result<Self, Error> {
        let arr: [Keypoint; NUM_KEYPOINTS] = joints.try_into().map_err(|_| {
            Error::Invalid(format!(
                "skeleton needs exactly {NUM_KEYPOINTS} joints, got {}",
                joints.len()
            ))
        })?;
        Ok(Self { joints: arr })
    }

    /// All-zero skeleton with zero confidence, used before a fencer is first seen.
    pub fn unseen() -> Self {
        Self::default()
    }

    pub fn has_torso(&self) -> bool {
        [
            joint::L_SHOULDER,
            joint::R_SHOULDER,
            joint::L_HIP,
            joint::R_HIP,
        ]
        .iter()
        .all(|&j| self.joints[j].is_observed())
    }

    /// Horizontal reflection about `x = width / 2` with anatomical pair swap.
    pub fn mirrored(&self, width: f64) -> Self {
        let mut out = *self;
        for kp in out.joints.iter_mut() {
            kp.x = width - kp.x;
        }
        for &(l, r) in joint::SYMMETRIC_PAIRS.iter() {
            out.joints.swap(l, r);
        }
        out
    }

    /// Tight box around observed joints.
    pub fn extent(&self) -> Option<BoundingBox> {
        let observed: Vec<&Keypoint> = self.joints.iter().filter(|k| k.is_observed()).collect();
        if observed.is_empty() {
            return None;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for k in &observed {
            x0 = x0.min(k.x);
            y0 = y0.min(k.y);
            x1 = x1.max(k.x);
            y1 = y1.max(k.y);
        }
        let conf = observed.iter().map(|k| k.confidence).sum::<f64>() / observed.len() as f64;
        Some(BoundingBox {
            x_min: x0,
            y_min: y0,
            x_max: x1,
            y_max: y1,
            confidence: conf,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub confidence: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, confidence: f64) -> Result<Self, Error> {
        if ![x_min, y_min, x_max, y_max, confidence].iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("non-finite bounding box".into()));
        }
        if x_min > x_max || y_min > y_max {
            return Err(Error::Invalid(format!(
                "inverted bounding box ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Invalid(format!("box confidence {confidence} outside [0, 1]")));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
            confidence,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn centroid(&self) -> [f64; 2] {
        [
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        ]
    }

    /// Box padded by `margin` on every side.
    pub fn padded(&self, margin: f64) -> Self {
        Self {
            x_min: self.x_min - margin,
            y_min: self.y_min - margin,
            x_max: self.x_max + margin,
            y_max: self.y_max + margin,
            confidence: self.confidence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Self {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(Error::Invalid(format!("unknown side {other:?} (expected left or right)"))),
        }
    }
}

/// The twelve annotated moves. Discriminants are the annotation codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MoveLabel {
    StepForward = 1,
    StepBackward = 2,
    HalfStepForward = 3,
    HalfStepBackward = 4,
    Lunge = 5,
    Fleche = 6,
    Wait = 7,
    Parry = 8,
    Beat = 9,
    Counterattack = 10,
    Fake = 11,
    Hit = 12,
}

impl MoveLabel {
    pub const ALL: [MoveLabel; NUM_MOVES] = [
        MoveLabel::StepForward,
        MoveLabel::StepBackward,
        MoveLabel::HalfStepForward,
        MoveLabel::HalfStepBackward,
        MoveLabel::Lunge,
        MoveLabel::Fleche,
        MoveLabel::Wait,
        MoveLabel::Parry,
        MoveLabel::Beat,
        MoveLabel::Counterattack,
        MoveLabel::Fake,
        MoveLabel::Hit,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Zero-based position in model outputs.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Snake-case name used in annotation and timeline files.
    pub fn name(self) -> &'static str {
        match self {
            MoveLabel::StepForward => "step_forward",
            MoveLabel::StepBackward => "step_backward",
            MoveLabel::HalfStepForward => "half_step_forward",
            MoveLabel::HalfStepBackward => "half_step_backward",
            MoveLabel::Lunge => "lunge",
            MoveLabel::Fleche => "fleche",
            MoveLabel::Wait => "wait",
            MoveLabel::Parry => "parry",
            MoveLabel::Beat => "beat",
            MoveLabel::Counterattack => "counterattack",
            MoveLabel::Fake => "fake",
            MoveLabel::Hit => "hit",
        }
    }

    /// Human wording used in explanations and prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            MoveLabel::StepForward => "step forward",
            MoveLabel::StepBackward => "step backward",
            MoveLabel::HalfStepForward => "half step forward",
            MoveLabel::HalfStepBackward => "half step backward",
            other => other.name(),
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for MoveLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MoveLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        MoveLabel::ALL
            .iter()
            .copied()
            .find(|m| m.name() == key)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "unknown move {s:?}; valid moves are: {}",
                    MoveLabel::valid_names()
                ))
            })
    }
}

/// Set of active move labels, one bit per label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct MoveSet(u16);

impl MoveSet {
    pub const fn empty() -> Self {
        MoveSet(0)
    }

    pub fn from_bits(bits: u16) -> Self {
        MoveSet(bits & 0x0fff)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn insert(&mut self, m: MoveLabel) {
        self.0 |= 1 << m.index();
    }

    pub fn remove(&mut self, m: MoveLabel) {
        self.0 &= !(1 << m.index());
    }

    pub fn contains(self, m: MoveLabel) -> bool {
        self.0 & (1 << m.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: MoveSet) -> MoveSet {
        MoveSet(self.0 | other.0)
    }

    pub fn intersects(self, other: MoveSet) -> bool {
        self.0 & other.0 != 0
    }

    /// Labels in code order.
    pub fn iter(self) -> impl Iterator<Item = MoveLabel> {
        MoveLabel::ALL.into_iter().filter(move |m| self.contains(*m))
    }

    /// 12-entry 0/1 indicator vector.
    pub fn to_indicator(self) -> [bool; NUM_MOVES] {
        let mut out = [false; NUM_MOVES];
        for m in self.iter() {
            out[m.index()] = true;
        }
        out
    }

    pub fn from_indicator(ind: &[bool]) -> Self {
        let mut s = MoveSet::empty();
        for (i, &on) in ind.iter().enumerate().take(NUM_MOVES) {
            if on {
                s.insert(MoveLabel::ALL[i]);
            }
        }
        s
    }

    /// `+`-joined snake-case names, e.g. `step_forward+beat`.
    pub fn to_field(self) -> String {
        self.iter().map(|m| m.name()).collect::<Vec<_>>().join("+")
    }

    /// Comma-joined display names, e.g. `lunge, hit`.
    pub fn display_list(self) -> String {
        self.iter().map(|m| m.display_name()).collect::<Vec<_>>().join(", ")
    }

    /// Inverse of [`MoveSet::to_field`]; an empty field is the empty set.
    pub fn parse_field(s: &str) -> Result<Self, Error> {
        let mut set = MoveSet::empty();
        if s.is_empty() {
            return Ok(set);
        }
        for part in s.split('+') {
            set.insert(part.parse()?);
        }
        Ok(set)
    }
}

impl FromIterator<MoveLabel> for MoveSet {
    fn from_iter<I: IntoIterator<Item = MoveLabel>>(iter: I) -> Self {
        let mut s = MoveSet::empty();
        for m in iter {
            s.insert(m);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BladeLine {
    Four,
    Six,
    Seven,
    Eight,
    Other,
}

impl BladeLine {
    pub const ALL: [BladeLine; NUM_BLADES] = [
        BladeLine::Four,
        BladeLine::Six,
        BladeLine::Seven,
        BladeLine::Eight,
        BladeLine::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BladeLine::Four => "4",
            BladeLine::Six => "6",
            BladeLine::Seven => "7",
            BladeLine::Eight => "8",
            BladeLine::Other => "other",
        }
    }
}

impl fmt::Display for BladeLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BladeLine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "4" => Ok(BladeLine::Four),
            "6" => Ok(BladeLine::Six),
            "7" => Ok(BladeLine::Seven),
            "8" => Ok(BladeLine::Eight),
            "other" => Ok(BladeLine::Other),
            other => Err(Error::Invalid(format!(
                "unknown blade line {other:?}; valid lines are: 4, 6, 7, 8, other"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn move_codes_follow_annotation_order() {
        let codes: Vec<u8> = MoveLabel::ALL.iter().map(|m| m.code()).collect();
        assert_eq!(codes, (1..=12).collect::<Vec<u8>>());
        assert_eq!(MoveLabel::Fleche.code(), 6);
        assert_eq!(MoveLabel::Hit.index(), 11);
    }

    #[test]
    fn move_names_round_trip() {
        for m in MoveLabel::ALL {
            assert_eq!(m.name().parse::<MoveLabel>().unwrap(), m);
        }
        let err = "jump".parse::<MoveLabel>().unwrap_err().to_string();
        for m in MoveLabel::ALL {
            assert!(err.contains(m.name()), "{err}");
        }
    }

    #[test]
    fn blade_lines_parse() {
        assert_eq!("8".parse::<BladeLine>().unwrap(), BladeLine::Eight);
        assert_eq!("Other".parse::<BladeLine>().unwrap(), BladeLine::Other);
        assert!("5".parse::<BladeLine>().is_err());
        assert_eq!(BladeLine::ALL.len(), 5);
    }

    #[test]
    fn move_set_field_format() {
        let s = MoveSet::parse_field("step_forward+beat").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.to_field(), "step_forward+beat");
        let lh: MoveSet = [MoveLabel::Hit, MoveLabel::Lunge].into_iter().collect();
        assert_eq!(lh.display_list(), "lunge, hit");
        assert!(MoveSet::parse_field("").unwrap().is_empty());
        assert!(MoveSet::parse_field("lunge+").is_err());
    }

    #[test]
    fn keypoint_rejects_bad_confidence() {
        assert!(Keypoint::new(1.0, 1.0, 1.5).is_err());
        assert!(Keypoint::new(f64::NAN, 1.0, 0.5).is_err());
    }

    #[test]
    fn mirror_swaps_pairs() {
        let mut joints = [Keypoint::default(); 17];
        joints[joint::L_WRIST] = Keypoint::new(100.0, 5.0, 1.0).unwrap();
        let s = Skeleton17::new(joints).mirrored(1280.0);
        assert_eq!(s.joints[joint::R_WRIST].x, 1180.0);
        assert_eq!(s.joints[joint::R_WRIST].y, 5.0);
        assert_eq!(s.joints[joint::L_WRIST].confidence, 0.0);
    }
}

macro_rules! serde_by_name {
    ($t:ty) => {
        impl serde::Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.name())
            }
        }

        impl<'de> serde::Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_by_name!(MoveLabel);
serde_by_name!(BladeLine);

impl serde::Serialize for MoveSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> serde::Deserialize<'de> for MoveSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Vec::<MoveLabel>::deserialize(d)?.into_iter().collect())
    }
}

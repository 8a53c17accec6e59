//! Pose frames and per-fencer tracks, plus the JSON Lines pose file format.
//!
//! A pose file holds an optional header line followed by one object per frame:
//!
//! ```text
//! {"clip_id": "c1", "width": 1280, "height": 720, "fps": 25.0}
//! {"frame": 0, "candidates": [{"bbox": [x0, y0, x1, y1, conf], "joints": [[x, y, c], ...]}]}
//! ```
//!
//! Track files use the same schema with an extra `"side"` key in the header and
//! at most one candidate per frame; frames without a candidate are absent.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BoundingBox, Keypoint, Side, Skeleton17, NUM_KEYPOINTS};

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub bbox: BoundingBox,
    pub skeleton: Skeleton17,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub frame_index: u64,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseHeader {
    pub clip_id: String,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFile {
    pub header: Option<PoseHeader>,
    pub frames: Vec<PoseFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackFrame {
    pub frame_index: u64,
    pub skeleton: Skeleton17,
    pub present: bool,
}

/// One fencer's skeleton sequence over a contiguous frame range.
///
/// Absent frames carry the most recent present skeleton (or an unseen
/// skeleton before the first detection).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrack {
    pub clip_id: String,
    pub side: Side,
    pub frames: Vec<TrackFrame>,
    pub frame_size: Option<(u32, u32)>,
    pub fps: f64,
}

impl PoseTrack {
    /// Builds a track from per-frame observations starting at `first_frame`,
    /// holding the last observation through gaps.
    pub fn from_observations(
        clip_id: impl Into<String>,
        side: Side,
        frame_size: Option<(u32, u32)>,
        fps: f64,
        first_frame: u64,
        observations: Vec<Option<Skeleton17>>,
    ) -> Self {
        let mut last = Skeleton17::unseen();
        let frames = observations
            .into_iter()
            .enumerate()
            .map(|(i, obs)| {
                let present = obs.is_some();
                if let Some(s) = obs {
                    last = s;
                }
                TrackFrame {
                    frame_index: first_frame + i as u64,
                    skeleton: last,
                    present,
                }
            })
            .collect();
        Self {
            clip_id: clip_id.into(),
            side,
            frames,
            frame_size,
            fps,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn first_frame(&self) -> Option<u64> {
        self.frames.first().map(|f| f.frame_index)
    }

    pub fn header(&self) -> PoseHeader {
        let (width, height) = self.frame_size.unwrap_or((0, 0));
        PoseHeader {
            clip_id: self.clip_id.clone(),
            width,
            height,
            fps: self.fps,
            side: Some(self.side),
        }
    }
}

/// Reflects a track about the frame's vertical midline, swapping anatomical
/// left/right joints and flipping the side flag. Applying it twice returns the
/// original track bit for bit.
pub fn mirror_track(track: &PoseTrack) -> Result<PoseTrack> {
    let (width, _) = track
        .frame_size
        .ok_or_else(|| Error::Invalid(format!("track {} has no frame size; cannot mirror", track.clip_id)))?;
    let w = width as f64;
    let frames = track
        .frames
        .iter()
        .map(|f| TrackFrame {
            frame_index: f.frame_index,
            skeleton: f.skeleton.mirrored(w),
            present: f.present,
        })
        .collect();
    Ok(PoseTrack {
        clip_id: track.clip_id.clone(),
        side: track.side.opposite(),
        frames,
        frame_size: track.frame_size,
        fps: track.fps,
    })
}

/// Mirrors right-side tracks so the analysed fencer is on the left.
pub fn to_canonical(track: &PoseTrack) -> Result<PoseTrack> {
    match track.side {
        Side::Left => Ok(track.clone()),
        Side::Right => mirror_track(track),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateRecord {
    bbox: [f64; 5],
    joints: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    frame: u64,
    candidates: Vec<CandidateRecord>,
}

fn candidate_from_record(rec: CandidateRecord, line: usize) -> Result<Candidate> {
    let err = |e: Error| Error::Parse {
        line,
        message: e.to_string(),
    };
    let [x0, y0, x1, y1, c] = rec.bbox;
    let bbox = BoundingBox::new(x0, y0, x1, y1, c).map_err(err)?;
    if rec.joints.len() != NUM_KEYPOINTS {
        return Err(Error::Parse {
            line,
            message: format!("field `joints` must hold {NUM_KEYPOINTS} entries, got {}", rec.joints.len()),
        });
    }
    let mut joints = [Keypoint::default(); NUM_KEYPOINTS];
    for (slot, [x, y, c]) in joints.iter_mut().zip(rec.joints) {
        *slot = Keypoint::new(x, y, c).map_err(err)?;
    }
    Ok(Candidate {
        bbox,
        skeleton: Skeleton17::new(joints),
    })
}

fn candidate_to_record(c: &Candidate) -> CandidateRecord {
    let b = &c.bbox;
    CandidateRecord {
        bbox: [b.x_min, b.y_min, b.x_max, b.y_max, b.confidence],
        joints: c.skeleton.joints.iter().map(|k| [k.x, k.y, k.confidence]).collect(),
    }
}

/// Parses pose JSON Lines text. Line numbers in errors are 1-based.
pub fn parse_pose_str(text: &str) -> Result<PoseFile> {
    let mut header = None;
    let mut frames: Vec<PoseFrame> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line,
            message: format!("invalid JSON: {e}"),
        })?;
        if value.get("clip_id").is_some() {
            if header.is_some() || !frames.is_empty() {
                return Err(Error::Structure(format!("line {line}: header must be the first record")));
            }
            let h: PoseHeader = serde_json::from_value(value).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            header = Some(h);
            continue;
        }
        let rec: FrameRecord = serde_json::from_value(value).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if let Some(prev) = frames.last() {
            if rec.frame <= prev.frame_index {
                return Err(Error::Structure(format!(
                    "line {line}: frame index {} does not increase (previous {})",
                    rec.frame, prev.frame_index
                )));
            }
        }
        let candidates = rec
            .candidates
            .into_iter()
            .map(|c| candidate_from_record(c, line))
            .collect::<Result<Vec<_>>>()?;
        frames.push(PoseFrame {
            frame_index: rec.frame,
            candidates,
        });
    }
    Ok(PoseFile { header, frames })
}

pub fn read_pose_file(path: impl AsRef<Path>) -> Result<PoseFile> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| Error::io(path, e))?);
        text.push('\n');
    }
    parse_pose_str(&text)
}

/// Frames of a pose file in index order.
pub fn parse_pose_file(path: impl AsRef<Path>) -> Result<Vec<PoseFrame>> {
    Ok(read_pose_file(path)?.frames)
}

pub fn pose_file_to_string(header: Option<&PoseHeader>, frames: &[PoseFrame]) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&serde_json::to_string(h).expect("header serializes"));
        out.push('\n');
    }
    for f in frames {
        let rec = FrameRecord {
            frame: f.frame_index,
            candidates: f.candidates.iter().map(candidate_to_record).collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("frame serializes"));
        out.push('\n');
    }
    out
}

pub fn write_pose_file(path: impl AsRef<Path>, header: Option<&PoseHeader>, frames: &[PoseFrame]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(pose_file_to_string(header, frames).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Present frames become a single candidate boxed by the joint extent.
pub fn track_to_frames(track: &PoseTrack) -> Vec<PoseFrame> {
    track
        .frames
        .iter()
        .map(|f| {
            let candidates = if f.present {
                let bbox = f.skeleton.extent().unwrap_or_default();
                vec![Candidate {
                    bbox,
                    skeleton: f.skeleton,
                }]
            } else {
                Vec::new()
            };
            PoseFrame {
                frame_index: f.frame_index,
                candidates,
            }
        })
        .collect()
}

pub fn track_from_file(file: PoseFile) -> Result<PoseTrack> {
    let header = file
        .header
        .ok_or_else(|| Error::Structure("track file has no header line".into()))?;
    let side = header
        .side
        .ok_or_else(|| Error::Structure("track file header has no `side`".into()))?;
    let first = file.frames.first().map(|f| f.frame_index).unwrap_or(0);
    let last = file.frames.last().map(|f| f.frame_index).unwrap_or(0);
    let mut obs: Vec<Option<Skeleton17>> = if file.frames.is_empty() {
        Vec::new()
    } else {
        vec![None; (last - first + 1) as usize]
    };
    for f in &file.frames {
        if f.candidates.len() > 1 {
            return Err(Error::Structure(format!(
                "track file frame {} has {} candidates (expected at most one)",
                f.frame_index,
                f.candidates.len()
            )));
        }
        if let Some(c) = f.candidates.first() {
            obs[(f.frame_index - first) as usize] = Some(c.skeleton);
        }
    }
    let frame_size = (header.width > 0 && header.height > 0).then_some((header.width, header.height));
    Ok(PoseTrack::from_observations(header.clip_id, side, frame_size, header.fps, first, obs))
}

pub fn read_track(path: impl AsRef<Path>) -> Result<PoseTrack> {
    track_from_file(read_pose_file(path)?)
}

pub fn write_track(path: impl AsRef<Path>, track: &PoseTrack) -> Result<()> {
    write_pose_file(path, Some(&track.header()), &track_to_frames(track))
}

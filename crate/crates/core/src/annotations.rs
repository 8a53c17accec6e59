//! Per-fencer move annotations and the flat CSV they are stored in:
//!
//! ```text
//! clip_id,side,start_frame,end_frame,moves,blade
//! clip7,left,80,112,step_forward,8
//! clip7,left,112,134,step_forward+beat,8
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{BladeLine, MoveSet, Side};

pub const ANNOTATION_HEADER: [&str; 6] = ["clip_id", "side", "start_frame", "end_frame", "moves", "blade"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnotationSegment {
    pub start_frame: u64,
    pub end_frame: u64,
    pub moves: MoveSet,
    pub blade: BladeLine,
}

impl AnnotationSegment {
    pub fn new(start_frame: u64, end_frame: u64, moves: MoveSet, blade: BladeLine) -> Result<Self> {
        if end_frame < start_frame {
            return Err(Error::Invalid(format!(
                "segment end {end_frame} precedes start {start_frame}"
            )));
        }
        if moves.is_empty() {
            return Err(Error::Invalid("segment has no moves".into()));
        }
        Ok(Self {
            start_frame,
            end_frame,
            moves,
            blade,
        })
    }

    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSequence {
    pub clip_id: String,
    pub side: Side,
    pub segments: Vec<AnnotationSegment>,
}

impl AnnotatedSequence {
    /// Sorts segments and merges those sharing a start frame: the merged
    /// interval ends where the longer action ends and keeps both label sets.
    pub fn new(clip_id: impl Into<String>, side: Side, mut segments: Vec<AnnotationSegment>) -> Self {
        segments.sort_by_key(|s| (s.start_frame, s.end_frame));
        let mut merged: Vec<AnnotationSegment> = Vec::with_capacity(segments.len());
        for seg in segments {
            match merged.last_mut() {
                Some(prev) if prev.start_frame == seg.start_frame => {
                    if seg.end_frame > prev.end_frame {
                        prev.end_frame = seg.end_frame;
                        prev.blade = seg.blade;
                    }
                    prev.moves = prev.moves.union(seg.moves);
                }
                _ => merged.push(seg),
            }
        }
        Self {
            clip_id: clip_id.into(),
            side,
            segments: merged,
        }
    }
}

fn field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<&str> {
    rec.get(i).map(str::trim).ok_or_else(|| Error::Parse {
        line,
        message: format!("missing column `{}`", ANNOTATION_HEADER[i]),
    })
}

/// Parses annotation CSV text into sequences grouped by (clip_id, side).
pub fn parse_annotations_str(text: &str) -> Result<Vec<AnnotatedSequence>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut groups: BTreeMap<(String, Side), Vec<AnnotationSegment>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        if i == 0 && rec.get(0).map(str::trim) == Some("clip_id") {
            continue;
        }
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let wrap = |e: Error| Error::Parse {
            line,
            message: e.to_string(),
        };
        let clip = field(&rec, 0, line)?.to_string();
        let side: Side = field(&rec, 1, line)?.parse().map_err(wrap)?;
        let start: u64 = field(&rec, 2, line)?.parse().map_err(|e| Error::Parse {
            line,
            message: format!("start_frame: {e}"),
        })?;
        let end: u64 = field(&rec, 3, line)?.parse().map_err(|e| Error::Parse {
            line,
            message: format!("end_frame: {e}"),
        })?;
        let moves = MoveSet::parse_field(field(&rec, 4, line)?).map_err(wrap)?;
        let blade: BladeLine = field(&rec, 5, line)?.parse().map_err(wrap)?;
        let seg = AnnotationSegment::new(start, end, moves, blade).map_err(wrap)?;
        groups.entry((clip, side)).or_default().push(seg);
    }
    Ok(groups
        .into_iter()
        .map(|((clip, side), segs)| AnnotatedSequence::new(clip, side, segs))
        .collect())
}

pub fn parse_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotatedSequence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations_str(&text)
}

pub fn annotations_to_string(seqs: &[AnnotatedSequence]) -> String {
    let mut out = ANNOTATION_HEADER.join(",");
    out.push('\n');
    for seq in seqs {
        for s in &seq.segments {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                seq.clip_id,
                seq.side,
                s.start_frame,
                s.end_frame,
                s.moves.to_field(),
                s.blade
            ));
        }
    }
    out
}

pub fn write_annotations(path: impl AsRef<Path>, seqs: &[AnnotatedSequence]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, annotations_to_string(seqs)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::MoveLabel;

    #[test]
    fn single_row_segment() {
        let seqs = parse_annotations_str("clip7,left,80,112,step_forward,8\n").unwrap();
        assert_eq!(seqs.len(), 1);
        let seg = seqs[0].segments[0];
        assert_eq!((seg.start_frame, seg.end_frame), (80, 112));
        assert_eq!(seg.moves.iter().collect::<Vec<_>>(), vec![MoveLabel::StepForward]);
        assert_eq!(seg.blade, BladeLine::Eight);
        assert_eq!(seqs[0].side, Side::Left);
    }

    #[test]
    fn compound_moves_keep_both_labels() {
        let seqs = parse_annotations_str("clip7,left,112,134,step_forward+beat,8\n").unwrap();
        let moves = seqs[0].segments[0].moves;
        assert_eq!(moves.len(), 2);
        assert!(moves.contains(MoveLabel::Beat) && moves.contains(MoveLabel::StepForward));
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(parse_annotations_str("").unwrap().is_empty());
        assert!(parse_annotations_str("clip_id,side,start_frame,end_frame,moves,blade\n")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn unknown_move_lists_vocabulary() {
        let err = parse_annotations_str("c,left,1,2,cartwheel,6\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        for m in MoveLabel::ALL {
            assert!(err.contains(m.name()), "{err}");
        }
    }

    #[test]
    fn reversed_interval_rejected() {
        assert!(parse_annotations_str("c,left,20,10,wait,6\n").is_err());
    }

    #[test]
    fn same_start_rows_merge_to_longer_interval() {
        let seqs = parse_annotations_str("c,left,10,14,beat,8\nc,left,10,30,step_forward,6\n").unwrap();
        assert_eq!(seqs[0].segments.len(), 1);
        let s = seqs[0].segments[0];
        assert_eq!(s.end_frame, 30);
        assert_eq!(s.blade, BladeLine::Six);
        assert_eq!(s.moves.len(), 2);
    }

    #[test]
    fn groups_sorted_by_clip_and_side() {
        let text = "b,right,5,9,wait,6\na,left,30,40,hit,6\na,left,1,9,lunge,6\nb,left,0,3,fake,4\n";
        let seqs = parse_annotations_str(text).unwrap();
        let keys: Vec<(String, Side)> = seqs.iter().map(|s| (s.clip_id.clone(), s.side)).collect();
        assert_eq!(
            keys,
            vec![("a".into(), Side::Left), ("b".into(), Side::Left), ("b".into(), Side::Right)]
        );
        assert_eq!(seqs[0].segments[0].start_frame, 1);
        let back = parse_annotations_str(&annotations_to_string(&seqs)).unwrap();
        assert_eq!(back, seqs);
    }
}

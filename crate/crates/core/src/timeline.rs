//! Per-fencer event timelines and their alignment on the shared clip time axis.

use crate::annotations::AnnotatedSequence;
use crate::error::{Error, Result};
use crate::types::{BladeLine, MoveSet, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimelineEvent {
    pub start: u64,
    pub end: u64,
    pub moves: MoveSet,
    pub blade: BladeLine,
}

/// Moves of one fencer in time order, from annotations or from decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideTimeline {
    pub clip_id: String,
    pub side: Side,
    pub events: Vec<TimelineEvent>,
}

impl From<&AnnotatedSequence> for SideTimeline {
    fn from(seq: &AnnotatedSequence) -> Self {
        SideTimeline {
            clip_id: seq.clip_id.clone(),
            side: seq.side,
            events: seq
                .segments
                .iter()
                .map(|s| TimelineEvent {
                    start: s.start_frame,
                    end: s.end_frame,
                    moves: s.moves,
                    blade: s.blade,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranscriptEvent {
    pub side: Side,
    pub start: u64,
    pub end: u64,
    pub moves: MoveSet,
    pub blade: BladeLine,
}

/// Both fencers' events merged in time order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExchangeTranscript {
    pub clip_id: String,
    pub events: Vec<TranscriptEvent>,
}

impl ExchangeTranscript {
    /// Builds a transcript, sorting by start frame with left before right on ties.
    pub fn new(clip_id: impl Into<String>, mut events: Vec<TranscriptEvent>) -> Self {
        events.sort_by_key(|e| (e.start, e.side, e.end));
        Self {
            clip_id: clip_id.into(),
            events,
        }
    }

    pub fn side_events(&self, side: Side) -> impl Iterator<Item = &TranscriptEvent> {
        self.events.iter().filter(move |e| e.side == side)
    }

    /// The same exchange with the fencers' sides exchanged.
    pub fn swapped(&self) -> Self {
        Self::new(
            self.clip_id.clone(),
            self.events
                .iter()
                .map(|e| TranscriptEvent {
                    side: e.side.opposite(),
                    ..*e
                })
                .collect(),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Merges the left and right timelines of one clip.
pub fn align_pair(left: &SideTimeline, right: &SideTimeline) -> Result<ExchangeTranscript> {
    if left.clip_id != right.clip_id {
        return Err(Error::Invalid(format!(
            "cannot align clip {:?} with clip {:?}",
            left.clip_id, right.clip_id
        )));
    }
    let tag = |side: Side, tl: &SideTimeline| {
        tl.events
            .iter()
            .map(move |e| TranscriptEvent {
                side,
                start: e.start,
                end: e.end,
                moves: e.moves,
                blade: e.blade,
            })
            .collect::<Vec<_>>()
    };
    let mut events = tag(Side::Left, left);
    events.extend(tag(Side::Right, right));
    Ok(ExchangeTranscript::new(left.clip_id.clone(), events))
}

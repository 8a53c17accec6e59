//! Labelled training data: tracks, segment examples, class weights and rebalancing.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};

use super::augment::{perturb_skeletons, shift_bounds, AugmentParams};
use super::config::AugmentConfig;
use crate::annotations::AnnotatedSequence;
use crate::error::{Error, Result};
use crate::features::{features_from_normalized, normalize_track, FeatureSequence, FeatureSubset, NormalizedSkeleton};
use crate::pose::{to_canonical, PoseTrack};
use crate::types::{BladeLine, MoveLabel, MoveSet, Side, NUM_BLADES, NUM_MOVES};

/// Frames before a segment fed to the descriptor so that velocities and
/// accelerations at its first frame match the track-level values.
pub const DERIVATIVE_CONTEXT: usize = 2;

/// One fencer's canonical skeleton sequence for a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrack {
    pub clip_id: String,
    pub side: Side,
    pub first_frame: u64,
    pub skeletons: Vec<Option<NormalizedSkeleton>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingExample {
    /// Index into [`Dataset::tracks`].
    pub track: usize,
    /// Inclusive frame range within the track.
    pub start: usize,
    pub end: usize,
    pub moves: MoveSet,
    pub blade: BladeLine,
}

impl TrainingExample {
    pub fn move_targets(&self) -> [f64; NUM_MOVES] {
        let mut y = [0.0; NUM_MOVES];
        for m in self.moves.iter() {
            y[m.index()] = 1.0;
        }
        y
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub tracks: Vec<LabeledTrack>,
    pub examples: Vec<TrainingExample>,
}

impl Dataset {
    /// Pairs each annotated sequence with its pose track. Right-side tracks
    /// are mirrored into the canonical view.
    pub fn build(tracks: &[PoseTrack], annotations: &[AnnotatedSequence]) -> Result<Self> {
        let mut ds = Dataset::default();
        for seq in annotations {
            let track = tracks
                .iter()
                .find(|t| t.clip_id == seq.clip_id && t.side == seq.side)
                .ok_or_else(|| {
                    Error::Invalid(format!("no pose track for clip {:?} side {}", seq.clip_id, seq.side))
                })?;
            let canonical = to_canonical(track)?;
            let first = track.first_frame().unwrap_or(0);
            let ti = ds.tracks.len();
            ds.tracks.push(LabeledTrack {
                clip_id: seq.clip_id.clone(),
                side: seq.side,
                first_frame: first,
                skeletons: normalize_track(&canonical),
            });
            let len = track.frames.len() as u64;
            for seg in &seq.segments {
                if seg.start_frame < first || seg.end_frame >= first + len {
                    log::warn!(
                        "segment {}-{} of {} {} lies outside its track; skipped",
                        seg.start_frame,
                        seg.end_frame,
                        seq.clip_id,
                        seq.side
                    );
                    continue;
                }
                ds.examples.push(TrainingExample {
                    track: ti,
                    start: (seg.start_frame - first) as usize,
                    end: (seg.end_frame - first) as usize,
                    moves: seg.moves,
                    blade: seg.blade,
                });
            }
        }
        Ok(ds)
    }

    /// Clip ids in first-seen order.
    pub fn clip_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in &self.tracks {
            if !out.contains(&t.clip_id) {
                out.push(t.clip_id.clone());
            }
        }
        out
    }

    /// Indices of examples whose clip is in `clips`.
    pub fn examples_for_clips(&self, clips: &[String]) -> Vec<usize> {
        (0..self.examples.len())
            .filter(|&i| clips.contains(&self.tracks[self.examples[i].track].clip_id))
            .collect()
    }

    /// Descriptor rows and validity mask for one example, optionally augmented.
    pub fn materialize<R: Rng + ?Sized>(
        &self,
        ex: &TrainingExample,
        subset: FeatureSubset,
        augment: Option<(&AugmentConfig, &mut R)>,
    ) -> (Array2<f64>, Vec<bool>) {
        let track = &self.tracks[ex.track];
        let len = track.skeletons.len();
        let (params, rng) = match augment {
            Some((cfg, rng)) => (AugmentParams::sample(cfg, rng), Some(rng)),
            None => (AugmentParams::identity(), None),
        };
        let (start, end) = shift_bounds(ex.start, ex.end, params.shift, len);
        let ctx = start.saturating_sub(DERIVATIVE_CONTEXT);
        let window = &track.skeletons[ctx..=end];
        let perturbed;
        let seq = match rng {
            Some(rng) if params != AugmentParams::identity() => {
                perturbed = perturb_skeletons(window, &params, rng);
                &perturbed[..]
            }
            _ => window,
        };
        let ff = features_from_normalized(seq);
        let rows = end - start + 1;
        let dim = subset.dim();
        let mut x = Array2::zeros((rows, dim));
        for r in 0..rows {
            let src = subset.select(&ff.frames[start - ctx + r]);
            for (c, v) in src.iter().enumerate() {
                x[[r, c]] = *v;
            }
        }
        (x, ff.valid_mask[start - ctx..].to_vec())
    }

    /// SHA-256 over the examples selected by `idx` and their skeletons.
    pub fn content_hash(&self, idx: &[usize]) -> String {
        let mut h = Sha256::new();
        for &i in idx {
            let ex = &self.examples[i];
            let t = &self.tracks[ex.track];
            h.update(t.clip_id.as_bytes());
            h.update([t.side.index() as u8]);
            h.update((ex.start as u64).to_le_bytes());
            h.update((ex.end as u64).to_le_bytes());
            h.update(ex.moves.bits().to_le_bytes());
            h.update([ex.blade.index() as u8]);
            for s in &t.skeletons[ex.start..=ex.end] {
                match s {
                    Some(s) => {
                        for p in &s.joints {
                            h.update(p[0].to_le_bytes());
                            h.update(p[1].to_le_bytes());
                        }
                    }
                    None => h.update([0xff]),
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Rows of a full-track descriptor sequence restricted to `subset`.
pub fn feature_rows(seq: &FeatureSequence, start: usize, end: usize, subset: FeatureSubset) -> (Array2<f64>, Vec<bool>) {
    let rows = end - start + 1;
    let mut x = Array2::zeros((rows, subset.dim()));
    for r in 0..rows {
        for (c, v) in subset.select(&seq.frames[start + r]).iter().enumerate() {
            x[[r, c]] = *v;
        }
    }
    (x, seq.valid_mask[start..=end].to_vec())
}

pub fn move_counts(examples: &[TrainingExample]) -> [usize; NUM_MOVES] {
    let mut c = [0; NUM_MOVES];
    for ex in examples {
        for m in ex.moves.iter() {
            c[m.index()] += 1;
        }
    }
    c
}

pub fn blade_counts(examples: &[TrainingExample]) -> [usize; NUM_BLADES] {
    let mut c = [0; NUM_BLADES];
    for ex in examples {
        c[ex.blade.index()] += 1;
    }
    c
}

/// Inverse-frequency weights normalised to mean 1. Unseen classes take the
/// weight of the rarest seen class; with no counts at all every weight is 1.
pub fn class_weights(counts: &[usize; NUM_MOVES]) -> [f64; NUM_MOVES] {
    let Some(min_seen) = counts.iter().copied().filter(|&c| c > 0).min() else {
        return [1.0; NUM_MOVES];
    };
    // relative to the rarest seen class, so equal counts give exactly 1
    let raw: Vec<f64> = counts
        .iter()
        .map(|&c| if c > 0 { min_seen as f64 / c as f64 } else { 1.0 })
        .collect();
    let mean = raw.iter().sum::<f64>() / NUM_MOVES as f64;
    let mut w = [0.0; NUM_MOVES];
    for (o, r) in w.iter_mut().zip(&raw) {
        *o = r / mean;
    }
    w
}

/// Upper bound on blade-6 examples: `ratio` times the mean count of the other
/// blade classes that occur at all.
pub fn blade_six_limit(counts: &[usize; NUM_BLADES], ratio: f64) -> Option<usize> {
    let others: Vec<usize> = BladeLine::ALL
        .iter()
        .filter(|b| **b != BladeLine::Six)
        .map(|b| counts[b.index()])
        .filter(|&c| c > 0)
        .collect();
    if others.is_empty() {
        return None;
    }
    let mean = others.iter().sum::<usize>() as f64 / others.len() as f64;
    Some((ratio * mean).floor() as usize)
}

/// Duplicates examples of move classes below `target` instances, then thins
/// blade-6 examples down to [`blade_six_limit`]. Duplicates receive fresh
/// augmentation when they are materialised.
pub fn rebalance<R: Rng + ?Sized>(
    examples: &[TrainingExample],
    target: usize,
    six_ratio: f64,
    rng: &mut R,
) -> Vec<TrainingExample> {
    let mut out = examples.to_vec();
    for m in MoveLabel::ALL {
        let pool: Vec<TrainingExample> = examples.iter().filter(|e| e.moves.contains(m)).copied().collect();
        if pool.is_empty() {
            log::warn!("move class {} has no training examples; not oversampled", m.name());
            continue;
        }
        let mut have = out.iter().filter(|e| e.moves.contains(m)).count();
        while have < target {
            out.push(pool[rng.random_range(0..pool.len())]);
            have += 1;
        }
    }

    let counts = blade_counts(&out);
    if let Some(limit) = blade_six_limit(&counts, six_ratio) {
        let six = counts[BladeLine::Six.index()];
        if six > limit {
            let mut six_idx: Vec<usize> = (0..out.len()).filter(|&i| out[i].blade == BladeLine::Six).collect();
            six_idx.shuffle(rng);
            let mut drop = vec![false; out.len()];
            for &i in &six_idx[..six - limit] {
                drop[i] = true;
            }
            out = out
                .into_iter()
                .zip(drop)
                .filter_map(|(e, d)| (!d).then_some(e))
                .collect();
        }
    } else {
        log::warn!("no blade classes besides 6 present; blade 6 not downsampled");
    }
    out
}

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use riposte_core::annotations::{annotations_to_string, parse_annotations_str, AnnotatedSequence, AnnotationSegment};
use riposte_core::calib::metrics::{compute_calibration, compute_classification, cooccurrence};
use riposte_core::calib::{TemperatureSet, ThresholdSet};
use riposte_core::features::{assemble_features, temporal_derivatives, DISTANCE_PAIRS, FEATURE_DIM};
use riposte_core::mdt::model::sigmoid;
use riposte_core::mdt::{forward, ModelConfig, ModelWeights, Prediction};
use riposte_core::pose::{mirror_track, parse_pose_str, pose_file_to_string, Candidate, PoseFrame, PoseHeader, PoseTrack};
use riposte_core::referee::{evaluate_priority, Decision, RuleBook};
use riposte_core::synth::{generate_bout, random_script, random_transcript, SynthClipSpec};
use riposte_core::timeline::{align_pair, SideTimeline, TimelineEvent};
use riposte_core::tracker::{track_clip, JointEma, TrackerConfig};
use riposte_core::types::{BladeLine, BoundingBox, Keypoint, MoveLabel, MoveSet, Side, Skeleton17, NUM_MOVES};
use riposte_core::windowing::{merge_nms, DetectedAction};

const W: u32 = 1280;
const H: u32 = 720;

fn skeleton() -> impl Strategy<Value = Skeleton17> {
    prop::collection::vec((0.0..W as f64, 0.0..H as f64, 0.05..=1.0f64), 17).prop_map(|j| {
        let joints: Vec<Keypoint> = j.into_iter().map(|(x, y, c)| Keypoint::new(x, y, c).unwrap()).collect();
        Skeleton17::from_slice(&joints).unwrap()
    })
}

fn track(len: usize) -> impl Strategy<Value = PoseTrack> {
    prop::collection::vec(prop::option::weighted(0.9, skeleton()), len)
        .prop_map(|obs| PoseTrack::from_observations("p", Side::Left, Some((W, H)), 25.0, 0, obs))
}

fn move_set() -> impl Strategy<Value = MoveSet> {
    (1u16..(1 << NUM_MOVES)).prop_map(MoveSet::from_bits)
}

fn any_move_set() -> impl Strategy<Value = MoveSet> {
    (0u16..(1 << NUM_MOVES)).prop_map(MoveSet::from_bits)
}

fn blade() -> impl Strategy<Value = BladeLine> {
    prop::sample::select(BladeLine::ALL.to_vec())
}

fn timeline(side: Side) -> impl Strategy<Value = SideTimeline> {
    prop::collection::vec((0u64..200, 0u64..40, move_set(), blade()), 0..8).prop_map(move |v| SideTimeline {
        clip_id: "c".into(),
        side,
        events: v
            .into_iter()
            .map(|(start, len, moves, blade)| TimelineEvent {
                start,
                end: start + len,
                moves,
                blade,
            })
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mirroring_is_an_involution(t in track(6)) {
        let m = mirror_track(&t).unwrap();
        prop_assert_eq!(m.side, Side::Right);
        prop_assert_eq!(&mirror_track(&m).unwrap(), &t);
        for (a, b) in t.frames.iter().zip(&m.frames) {
            for i in 0..17 {
                for j in 0..17 {
                    let d = |s: &Skeleton17, p: usize, q: usize| {
                        let (u, v) = (s.joints[p], s.joints[q]);
                        (u.x - v.x).hypot(u.y - v.y)
                    };
                    // Mirroring swaps anatomical sides, so compare with the partner joints.
                    let sw = |k: usize| riposte_core::types::joint::SYMMETRIC_PAIRS
                        .iter()
                        .find_map(|&(l, r)| if k == l { Some(r) } else if k == r { Some(l) } else { None })
                        .unwrap_or(k);
                    prop_assert!((d(&a.skeleton, i, j) - d(&b.skeleton, sw(i), sw(j))).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn pose_files_round_trip(frames in prop::collection::vec(prop::collection::vec(skeleton(), 0..3), 1..5)) {
        let frames: Vec<PoseFrame> = frames
            .into_iter()
            .enumerate()
            .map(|(i, sk)| PoseFrame {
                frame_index: 2 * i as u64,
                candidates: sk
                    .into_iter()
                    .map(|s| Candidate { bbox: BoundingBox::new(1.0, 2.0, 300.5, 400.25, 0.75).unwrap(), skeleton: s })
                    .collect(),
            })
            .collect();
        let header = PoseHeader { clip_id: "rt".into(), width: W, height: H, fps: 25.0, side: None };
        let parsed = parse_pose_str(&pose_file_to_string(Some(&header), &frames)).unwrap();
        prop_assert_eq!(parsed.header, Some(header));
        prop_assert_eq!(parsed.frames, frames);
    }

    #[test]
    fn annotations_round_trip(segs in prop::collection::vec((0u64..30, move_set(), blade()), 1..6), side in prop::bool::ANY) {
        let mut start = 0;
        let segments = segs
            .into_iter()
            .map(|(len, m, b)| {
                let s = AnnotationSegment::new(start, start + len, m, b).unwrap();
                start += len + 1;
                s
            })
            .collect();
        let side = if side { Side::Left } else { Side::Right };
        let seqs = vec![AnnotatedSequence::new("clip_a", side, segments)];
        prop_assert_eq!(parse_annotations_str(&annotations_to_string(&seqs)).unwrap(), seqs);
    }

    #[test]
    fn alignment_keeps_every_event_in_order(l in timeline(Side::Left), r in timeline(Side::Right)) {
        let t = align_pair(&l, &r).unwrap();
        prop_assert_eq!(t.events.len(), l.events.len() + r.events.len());
        prop_assert!(t.events.windows(2).all(|w| w[0].start <= w[1].start));
    }

    #[test]
    fn ema_stays_within_observed_range(xs in prop::collection::vec(prop::option::of(0.0..1000.0f64), 1..30), lambda in 0.05..1.0f64) {
        let mut ema = JointEma::new(lambda);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in xs {
            let obs = x.map(|x| {
                lo = lo.min(Keypoint::new(x, 0.0, 1.0).unwrap().x);
                hi = hi.max(Keypoint::new(x, 0.0, 1.0).unwrap().x);
                Skeleton17::new([Keypoint::new(x, x, 1.0).unwrap(); 17])
            });
            let out = ema.update(obs.as_ref());
            if lo.is_finite() {
                for k in &out.joints {
                    prop_assert!(k.x >= lo - 1e-9 && k.x <= hi + 1e-9);
                    prop_assert!(k.y >= lo - 1e-9 && k.y <= hi + 1e-9);
                }
            }
        }
    }

    #[test]
    fn features_ignore_translation_and_scale(t in track(5), k in 0.25..4.0f64, dx in -500.0..500.0f64, dy in -500.0..500.0f64) {
        let mut moved = t.clone();
        moved.frame_size = None;
        for f in &mut moved.frames {
            for j in &mut f.skeleton.joints {
                *j = Keypoint::new(k * j.x + dx, k * j.y + dy, j.confidence).unwrap();
            }
        }
        let mut base = t.clone();
        base.frame_size = None;
        let a = assemble_features(&base);
        let b = assemble_features(&moved);
        prop_assert_eq!(&a.valid_mask, &b.valid_mask);
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            prop_assert_eq!(fa.0.len(), FEATURE_DIM);
            for (x, y) in fa.0.iter().zip(fb.0.iter()) {
                prop_assert!(x.is_finite());
                // Lattice snapping of the moved skeleton perturbs coordinates by at most 2^-31 px.
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()).max(1.0) / k.min(1.0), "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn linear_motion_has_constant_velocity(x0 in -5.0..5.0f64, v in -1.0..1.0f64, n in 3usize..20) {
        let seq: Vec<Option<[[f64; 2]; 1]>> = (0..n).map(|i| Some([[x0 + v * i as f64, 2.0 * v * i as f64]])).collect();
        let (vel, acc) = temporal_derivatives(&seq);
        for i in 1..n {
            prop_assert!((vel[i][0][0] - v).abs() < 1e-12);
            prop_assert!((vel[i][0][1] - 2.0 * v).abs() < 1e-12);
        }
        for a in &acc[2..] {
            prop_assert!(a[0][0].abs() < 1e-12 && a[0][1].abs() < 1e-12);
        }
    }

    #[test]
    fn hamming_zero_iff_identical(truth in prop::collection::vec(any_move_set(), 1..40), flips in prop::collection::vec((0usize..40, 0usize..NUM_MOVES), 0..3)) {
        let mut pred = truth.clone();
        for (i, c) in flips {
            let i = i % pred.len();
            pred[i] = MoveSet::from_bits(pred[i].bits() ^ (1 << c));
        }
        let h = compute_classification(&pred, &truth).unwrap().hamming;
        prop_assert_eq!(h == 0.0, pred == truth);
    }

    #[test]
    fn macro_f1_is_label_permutation_invariant(
        pairs in prop::collection::vec((any_move_set(), any_move_set()), 1..40),
        perm in Just((0..NUM_MOVES).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let relabel = |s: MoveSet| s.iter().map(|m| MoveLabel::ALL[perm[m.index()]]).collect::<MoveSet>();
        let (p, t): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let (pp, tp): (Vec<_>, Vec<_>) = pairs.iter().map(|(a, b)| (relabel(*a), relabel(*b))).unzip();
        let a = compute_classification(&p, &t).unwrap();
        let b = compute_classification(&pp, &tp).unwrap();
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        for c in 0..NUM_MOVES {
            prop_assert_eq!(a.per_class[c].f1, b.per_class[perm[c]].f1);
        }
    }

    #[test]
    fn ece_bounded_by_mce(v in prop::collection::vec((0.0..=1.0f64, prop::bool::ANY), 1..200), bins in 1usize..30) {
        let (p, y): (Vec<f64>, Vec<bool>) = v.into_iter().unzip();
        let r = compute_calibration(&p, &y, bins).unwrap();
        prop_assert!(r.ece <= r.mce + 1e-12);
        prop_assert!((0.0..=1.0).contains(&r.brier));
    }

    #[test]
    fn cooccurrence_is_symmetric(sets in prop::collection::vec(any_move_set(), 0..50)) {
        let m = cooccurrence(&sets);
        for a in MoveLabel::ALL {
            let count = sets.iter().filter(|s| s.contains(a)).count() as u64;
            prop_assert_eq!(m.get(a, a), count);
            for b in MoveLabel::ALL {
                prop_assert_eq!(m.get(a, b), m.get(b, a));
            }
        }
    }

    #[test]
    fn scaled_thresholds_preserve_decisions(
        logits in prop::collection::vec(-8.0..8.0f64, NUM_MOVES + 5),
        taus in prop::collection::vec(0.05..0.95f64, NUM_MOVES),
        temps in prop::collection::vec(0.1..10.0f64, NUM_MOVES),
    ) {
        let pred = Prediction::from_logits(&logits);
        let mut ts = TemperatureSet::default();
        ts.moves.copy_from_slice(&temps);
        let scaled = ts.apply(&pred);
        let tau: [f64; NUM_MOVES] = taus.clone().try_into().unwrap();
        let mut tau_scaled = [0.0; NUM_MOVES];
        for c in 0..NUM_MOVES {
            let logit = (tau[c] / (1.0 - tau[c])).ln();
            // Skip logits sitting on the decision boundary, where rounding decides.
            prop_assume!((logits[c] - logit).abs() > 1e-9);
            tau_scaled[c] = sigmoid(logit / temps[c]);
        }
        let before: MoveSet = ThresholdSet::new(tau).unwrap().passes(&pred.move_probs).collect();
        let after: MoveSet = ThresholdSet::new(tau_scaled).unwrap().passes(&scaled.move_probs).collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn nms_ignores_input_order(
        raw in prop::collection::vec((0u64..100, 0u64..40, move_set(), 0.5..1.0f64), 0..12),
        order in any::<u64>(),
    ) {
        let actions: Vec<DetectedAction> = raw
            .iter()
            .map(|&(s, len, m, p)| DetectedAction {
                start_frame: s,
                end_frame: s + len,
                moves: m.iter().map(|l| (l, p)).collect(),
                blade: BladeLine::Six,
                blade_confidence: 1.0,
            })
            .collect();
        let mut shuffled = actions.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(order));
        let a = merge_nms(actions, 0.5);
        let b = merge_nms(shuffled, 0.5);
        prop_assert_eq!(&a, &b);
        for x in &a {
            prop_assert!(!x.is_empty() && x.len() <= 40);
        }
    }

    #[test]
    fn referee_is_side_antisymmetric(seed in any::<u64>(), len in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_transcript("x", len, &mut rng);
        let book = RuleBook::foil();
        let v = evaluate_priority(&t, &book).unwrap();
        let s = evaluate_priority(&t.swapped(), &book).unwrap();
        prop_assert_eq!(s.decision, v.decision.swapped());
        prop_assert_eq!(evaluate_priority(&t, &book).unwrap(), v.clone());
        prop_assert!(!v.fired_rules.is_empty());
        let first = t.events.iter().map(|e| e.start).min().unwrap();
        let last = t.events.iter().map(|e| e.end).max().unwrap();
        prop_assert_eq!(v.priority_trace.first().unwrap().0, first);
        prop_assert!(v.priority_trace.last().unwrap().0 <= last);
    }

    #[test]
    fn one_sided_attack_wins(
        left in prop::sample::select(vec![MoveLabel::Lunge, MoveLabel::Fleche, MoveLabel::StepForward]),
        right in prop::sample::select(vec![MoveLabel::Wait, MoveLabel::StepBackward, MoveLabel::HalfStepBackward]),
        swap in prop::bool::ANY,
    ) {
        let ev = |side, start, end, moves: &[MoveLabel]| riposte_core::timeline::TranscriptEvent {
            side, start, end, moves: moves.iter().copied().collect(), blade: BladeLine::Six,
        };
        let t = riposte_core::timeline::ExchangeTranscript::new("o", vec![
            ev(Side::Left, 0, 9, &[left]),
            ev(Side::Left, 10, 20, &[left, MoveLabel::Hit]),
            ev(Side::Right, 0, 20, &[right]),
        ]);
        let t = if swap { t.swapped() } else { t };
        let want = if swap { Decision::Right } else { Decision::Left };
        prop_assert_eq!(evaluate_priority(&t, &RuleBook::foil()).unwrap().decision, want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn padding_does_not_change_forward(seed in any::<u64>(), len in 1usize..8, pad in 1usize..10) {
        let cfg = ModelConfig { embed_dim: 16, layers: 2, heads: 4, ff_dim: 32, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = ModelWeights::init(&cfg, &mut rng).unwrap();
        let x = ndarray::Array2::from_shape_fn((len, FEATURE_DIM), |(i, j)| ((i * 31 + j * 7) as f64 * 0.37).sin());
        let mut padded = ndarray::Array2::from_elem((len + pad, FEATURE_DIM), 9.0);
        padded.slice_mut(ndarray::s![..len, ..]).assign(&x);
        let mut mask = vec![true; len];
        let a = forward(&w, x.view(), &mask).unwrap();
        mask.extend(std::iter::repeat_n(false, pad));
        let b = forward(&w, padded.view(), &mask).unwrap();
        for (p, q) in a.logits().iter().zip(b.logits().iter()) {
            prop_assert!((p - q).abs() <= 1e-6);
        }
        prop_assert!((b.blade_probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(b.move_probs.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn synth_segments_tile_and_tracker_ignores_candidate_order(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let script = |rng: &mut ChaCha8Rng| random_script(&MoveLabel::ALL, n, true, rng);
        let spec = SynthClipSpec::new("tile", seed, script(&mut rng), script(&mut rng));
        let bout = generate_bout(&spec).unwrap();
        for (seq, entries) in bout.annotations.iter().zip([&spec.left, &spec.right]) {
            prop_assert_eq!(seq.segments.len(), entries.len());
            prop_assert_eq!(seq.segments[0].start_frame, 0);
            for w in seq.segments.windows(2) {
                prop_assert_eq!(w[1].start_frame, w[0].end_frame + 1);
            }
        }
        let cfg = TrackerConfig::default();
        let a = track_clip(&bout.header, &bout.frames, &cfg);
        let mut reversed = bout.frames.clone();
        for f in &mut reversed {
            f.candidates.reverse();
        }
        let b = track_clip(&bout.header, &reversed, &cfg);
        prop_assert_eq!(a.left, b.left);
        prop_assert_eq!(a.right, b.right);
    }
}

#[test]
fn distance_pairs_are_symmetric() {
    // Pair order cannot matter for Euclidean distance; the pair list itself
    // must not contain a pair and its reverse.
    for (i, a) in DISTANCE_PAIRS.iter().enumerate() {
        for b in &DISTANCE_PAIRS[i + 1..] {
            assert_ne!(*a, *b);
            assert_ne!(*a, (b.1, b.0));
        }
    }
}

//! Right-of-way state machine over an aligned two-fencer transcript.
//!
//! Events sharing a start frame are evaluated together against the state
//! before them, so the outcome never depends on which side is listed first.

use serde::{Deserialize, Serialize};

use super::rules::*;
use crate::error::{Error, Result};
use crate::timeline::ExchangeTranscript;
use crate::types::{MoveLabel, MoveSet, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Left,
    Right,
    None,
}

impl Decision {
    pub fn from_side(side: Option<Side>) -> Self {
        match side {
            Some(Side::Left) => Decision::Left,
            Some(Side::Right) => Decision::Right,
            None => Decision::None,
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            Decision::Left => Decision::Right,
            Decision::Right => Decision::Left,
            Decision::None => Decision::None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Left => "Left",
            Decision::Right => "Right",
            Decision::None => "None",
        }
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Decision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Left" => Ok(Decision::Left),
            "Right" => Ok(Decision::Right),
            "None" => Ok(Decision::None),
            other => Err(Error::Invalid(format!("unknown decision {other:?}; expected Left, Right or None"))),
        }
    }
}

/// Why a rule fired, with the events it refers to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Firing {
    Initiate { side: Side, event: usize },
    Interrupt { side: Side, event: usize },
    FallShort { side: Side, short: usize, event: usize },
    Counterattack { side: Side, event: usize },
    Touch(TouchOutcome),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TouchOutcome {
    NoTouch,
    /// One fencer hit; `with_priority` is false when it scores because the
    /// opponent never attacked.
    Single { side: Side, event: usize, scores: bool, with_priority: bool },
    Double { left: usize, right: usize, winner: Option<Side> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleFiring {
    pub rule_id: String,
    pub frame: u64,
    pub firing: Firing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub explanation: String,
    /// Distinct rule ids in the order they first fired.
    pub fired_rules: Vec<String>,
    /// `(frame, holder)` from the first event start to the last event end.
    pub priority_trace: Vec<(u64, Option<Side>)>,
    #[serde(skip)]
    pub firings: Vec<RuleFiring>,
}

fn forward_footwork(m: MoveSet) -> bool {
    m.contains(MoveLabel::StepForward) || m.contains(MoveLabel::HalfStepForward)
}

/// Moves that seize the initiative. A fake counts only with forward footwork.
pub fn is_offensive(m: MoveSet) -> bool {
    forward_footwork(m)
        || m.contains(MoveLabel::Lunge)
        || m.contains(MoveLabel::Fleche)
        || m.contains(MoveLabel::Beat)
}

fn is_attacking(m: MoveSet) -> bool {
    is_offensive(m) || m.contains(MoveLabel::Counterattack)
}

struct State {
    holder: Option<Side>,
    fell_short: Option<usize>,
    attacked: [bool; 2],
    /// Last event carrying a hit, per side.
    hit: [Option<usize>; 2],
}

pub fn evaluate_priority(t: &ExchangeTranscript, rules: &RuleBook) -> Result<Verdict> {
    if t.events.is_empty() {
        return Err(Error::Invalid("empty transcript".into()));
    }
    let mut st = State {
        holder: None,
        fell_short: None,
        attacked: [false; 2],
        hit: [None; 2],
    };
    let mut firings: Vec<RuleFiring> = Vec::new();
    let first = t.events.iter().map(|e| e.start).min().unwrap();
    let last = t.events.iter().map(|e| e.end).max().unwrap();
    let mut trace = vec![(first, None)];

    let mut i = 0;
    while i < t.events.len() {
        let start = t.events[i].start;
        let mut j = i;
        while j < t.events.len() && t.events[j].start == start {
            j += 1;
        }
        // moves per side in this group, with a representative event index
        let mut moves = [MoveSet::default(); 2];
        let mut idx: [Option<usize>; 2] = [None; 2];
        for (k, e) in t.events[i..j].iter().enumerate() {
            let s = e.side.index();
            moves[s] = moves[s].union(e.moves);
            if idx[s].is_none() || e.moves.contains(MoveLabel::Hit) {
                idx[s] = Some(i + k);
            }
        }
        let before = st.holder;

        match st.holder {
            None => {
                let offensive: Vec<Side> = [Side::Left, Side::Right]
                    .into_iter()
                    .filter(|s| is_offensive(moves[s.index()]))
                    .collect();
                if offensive.len() == 1 && rules.enabled(ROW_INITIATE) {
                    let s = offensive[0];
                    st.holder = Some(s);
                    firings.push(RuleFiring {
                        rule_id: ROW_INITIATE.into(),
                        frame: start,
                        firing: Firing::Initiate {
                            side: s,
                            event: idx[s.index()].unwrap(),
                        },
                    });
                }
            }
            Some(h) => {
                let o = h.opposite();
                let om = moves[o.index()];
                if (om.contains(MoveLabel::Parry) || om.contains(MoveLabel::Beat)) && rules.enabled(ROW_INTERRUPT) {
                    st.holder = Some(o);
                    st.fell_short = None;
                    firings.push(RuleFiring {
                        rule_id: ROW_INTERRUPT.into(),
                        frame: start,
                        firing: Firing::Interrupt {
                            side: o,
                            event: idx[o.index()].unwrap(),
                        },
                    });
                } else if let (Some(short), true) = (st.fell_short, is_attacking(om)) {
                    if rules.enabled(ROW_FALL_SHORT) {
                        st.holder = Some(o);
                        st.fell_short = None;
                        firings.push(RuleFiring {
                            rule_id: ROW_FALL_SHORT.into(),
                            frame: start,
                            firing: Firing::FallShort {
                                side: o,
                                short,
                                event: idx[o.index()].unwrap(),
                            },
                        });
                    }
                } else if om.contains(MoveLabel::Counterattack) && rules.enabled(ROW_COUNTERATTACK) {
                    firings.push(RuleFiring {
                        rule_id: ROW_COUNTERATTACK.into(),
                        frame: start,
                        firing: Firing::Counterattack {
                            side: o,
                            event: idx[o.index()].unwrap(),
                        },
                    });
                }
            }
        }

        for s in [Side::Left, Side::Right] {
            let m = moves[s.index()];
            st.attacked[s.index()] |= is_attacking(m);
            if m.contains(MoveLabel::Hit) {
                st.hit[s.index()] = idx[s.index()];
            }
        }
        if let Some(h) = st.holder {
            let m = moves[h.index()];
            if m.contains(MoveLabel::Hit) {
                st.fell_short = None;
            } else if m.contains(MoveLabel::Lunge) || m.contains(MoveLabel::Fleche) {
                st.fell_short = idx[h.index()];
            }
        }
        if st.holder != before {
            trace.push((start, st.holder));
        }
        i = j;
    }

    let decision = settle(&st, rules, last, &mut firings);
    trace.push((last, st.holder));

    let mut fired_rules: Vec<String> = Vec::new();
    for f in &firings {
        if !fired_rules.contains(&f.rule_id) {
            fired_rules.push(f.rule_id.clone());
        }
    }
    let mut verdict = Verdict {
        decision,
        explanation: String::new(),
        fired_rules,
        priority_trace: trace,
        firings,
    };
    verdict.explanation = super::render::render_explanation(&verdict, t);
    Ok(verdict)
}

fn settle(st: &State, rules: &RuleBook, last: u64, firings: &mut Vec<RuleFiring>) -> Decision {
    let hitters: Vec<Side> = [Side::Left, Side::Right]
        .into_iter()
        .filter(|s| st.hit[s.index()].is_some())
        .collect();
    let with_e = rules.enabled(ROW_TOUCH);
    let (decision, outcome) = match hitters.as_slice() {
        [] => (Decision::None, TouchOutcome::NoTouch),
        [s] => {
            let s = *s;
            let with_priority = st.holder == Some(s);
            let scores = !with_e || with_priority || !st.attacked[s.opposite().index()];
            (
                if scores { Decision::from_side(Some(s)) } else { Decision::None },
                TouchOutcome::Single {
                    side: s,
                    event: st.hit[s.index()].unwrap(),
                    scores,
                    with_priority,
                },
            )
        }
        _ => {
            let winner = if with_e { st.holder } else { None };
            (
                Decision::from_side(winner),
                TouchOutcome::Double {
                    left: st.hit[0].unwrap(),
                    right: st.hit[1].unwrap(),
                    winner,
                },
            )
        }
    };
    if with_e {
        firings.push(RuleFiring {
            rule_id: ROW_TOUCH.into(),
            frame: last,
            firing: Firing::Touch(outcome),
        });
    }
    decision
}

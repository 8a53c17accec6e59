//! Verdict explanations and explainer prompts.

use std::collections::BTreeSet;

use super::engine::{Firing, TouchOutcome, Verdict};
use super::rules::RuleBook;
use crate::error::{Error, Result};
use crate::timeline::{ExchangeTranscript, TranscriptEvent};
use crate::types::Side;

fn fencer(side: Side) -> &'static str {
    match side {
        Side::Left => "left fencer",
        Side::Right => "right fencer",
    }
}

fn cite(e: &TranscriptEvent) -> String {
    format!("{} ({}\u{2013}{})", e.moves.display_list(), e.start, e.end)
}

fn sentence(f: &Firing, id: &str, t: &ExchangeTranscript) -> String {
    let ev = |i: usize| cite(&t.events[i]);
    let body = match f {
        Firing::Initiate { side, event } => {
            format!("The {} initiates the attack with {} and takes priority", fencer(*side), ev(*event))
        }
        Firing::Interrupt { side, event } => {
            format!("The {} interrupts the attack with {} and takes priority", fencer(*side), ev(*event))
        }
        Firing::FallShort { side, short, event } => format!(
            "The {}'s attack with {} falls short, so priority shifts to the {} with {}",
            fencer(side.opposite()),
            ev(*short),
            fencer(*side),
            ev(*event)
        ),
        Firing::Counterattack { side, event } => format!(
            "The {} responds with {}, which does not take priority from the continuing attack",
            fencer(*side),
            ev(*event)
        ),
        Firing::Touch(TouchOutcome::NoTouch) => "No hit was recorded, so there is no touch".to_string(),
        Firing::Touch(TouchOutcome::Single {
            side,
            event,
            scores,
            with_priority,
        }) => match (scores, with_priority) {
            (true, true) => format!("The {} hits with {} while holding priority and scores", fencer(*side), ev(*event)),
            (true, false) => format!(
                "The {} hits with {} and scores because the {} never attacked",
                fencer(*side),
                ev(*event),
                fencer(side.opposite())
            ),
            (false, _) => format!(
                "The {} hits with {} without priority against an attacking opponent, so no touch is awarded",
                fencer(*side),
                ev(*event)
            ),
        },
        Firing::Touch(TouchOutcome::Double { left, right, winner }) => match winner {
            Some(w) => format!(
                "Both fencers hit, the left with {} and the right with {}; priority remains with the {}, who scores",
                ev(*left),
                ev(*right),
                fencer(*w)
            ),
            None => format!(
                "Both fencers hit, the left with {} and the right with {}, with neither holding priority, so no touch is awarded",
                ev(*left),
                ev(*right)
            ),
        },
    };
    format!("{body} ({id}).")
}

/// `Decision: X` followed by one sentence per fired rule, each citing its id once.
pub fn render_explanation(v: &Verdict, t: &ExchangeTranscript) -> String {
    let mut sentences = Vec::new();
    for id in &v.fired_rules {
        if let Some(f) = v.firings.iter().find(|f| &f.rule_id == id) {
            sentences.push(sentence(&f.firing, id, t));
        }
    }
    let touched = t.events.iter().any(|e| e.moves.contains(crate::types::MoveLabel::Hit));
    if !touched && !v.firings.iter().any(|f| matches!(f.firing, Firing::Touch(_))) {
        sentences.push("No hit was recorded, so there is no touch.".into());
    }
    if sentences.is_empty() {
        sentences.push("No right-of-way rule applied.".into());
    }
    format!("Decision: {}\nExplanation: {}", v.decision, sentences.join(" "))
}

/// One fencer's moves as `[start–end] a + b (blade pos. x); ...`.
pub fn move_listing(t: &ExchangeTranscript, side: Side) -> String {
    let items: Vec<String> = t
        .side_events(side)
        .map(|e| {
            let moves: Vec<&str> = e.moves.iter().map(|m| m.display_name()).collect();
            format!("[{}\u{2013}{}] {} (blade pos. {})", e.start, e.end, moves.join(" + "), e.blade)
        })
        .collect();
    if items.is_empty() {
        "none.".into()
    } else {
        format!("{}.", items.join("; "))
    }
}

/// Rules whose keywords name a move in the transcript, in rulebook order;
/// all rules when none match.
pub fn select_rules<'a>(t: &ExchangeTranscript, rules: &'a RuleBook) -> Vec<&'a super::rules::Rule> {
    let present: BTreeSet<&str> = t
        .events
        .iter()
        .flat_map(|e| e.moves.iter().map(|m| m.display_name()))
        .collect();
    let matched: Vec<_> = rules
        .rules
        .iter()
        .filter(|r| r.keywords.iter().any(|k| present.contains(k.as_str())))
        .collect();
    if matched.is_empty() {
        rules.rules.iter().collect()
    } else {
        matched
    }
}

pub fn format_prompt(t: &ExchangeTranscript, rules: &RuleBook) -> Result<String> {
    if rules.is_empty() {
        return Err(Error::Invalid("no rules".into()));
    }
    let mut s = String::from("Rules:\n");
    for r in select_rules(t, rules) {
        s.push_str(&format!("- {}\n", r.text));
    }
    s.push_str("\nFencing moves:\n");
    s.push_str(&format!("Left: {}\n", move_listing(t, Side::Left)));
    s.push_str(&format!("Right: {}\n", move_listing(t, Side::Right)));
    s.push_str(
        "\nAnswer in two parts. First, a single line \"Decision: Left\", \"Decision: Right\" or \"Decision: None\". \
         Second, a line starting with \"Explanation:\" giving a brief explanation that refers to the rules and moves above.\n",
    );
    Ok(s)
}

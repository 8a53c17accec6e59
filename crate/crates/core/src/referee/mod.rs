//! Right-of-way evaluation, explanations and the optional text-generation explainer.

pub mod engine;
pub mod explainer;
pub mod render;
pub mod rules;

pub use engine::{evaluate_priority, Decision, Verdict};
pub use explainer::{query_explainer, ExplainerConfig, ExplainerOutcome, VerdictSource};
pub use render::{format_prompt, render_explanation};
pub use rules::RuleBook;

use serde::Serialize;

#[derive(Serialize)]
struct VerdictJson<'a> {
    decision: Decision,
    explanation: &'a str,
    fired_rules: &'a [String],
    priority_trace: Vec<(u64, Option<&'static str>)>,
}

/// `{decision, explanation, fired_rules, priority_trace}` as pretty JSON.
pub fn verdict_to_json(v: &Verdict) -> String {
    let j = VerdictJson {
        decision: v.decision,
        explanation: &v.explanation,
        fired_rules: &v.fired_rules,
        priority_trace: v.priority_trace.iter().map(|(f, s)| (*f, s.map(|s| s.as_str()))).collect(),
    };
    serde_json::to_string_pretty(&j).expect("verdict serialises")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::{ExchangeTranscript, TranscriptEvent};
    use crate::types::{BladeLine, MoveLabel::*, MoveSet, Side};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn ev(side: Side, start: u64, end: u64, moves: &[crate::types::MoveLabel], blade: BladeLine) -> TranscriptEvent {
        TranscriptEvent {
            side,
            start,
            end,
            moves: moves.iter().copied().collect::<MoveSet>(),
            blade,
        }
    }

    fn exchange() -> ExchangeTranscript {
        use BladeLine::*;
        ExchangeTranscript::new(
            "bout",
            vec![
                ev(Side::Left, 80, 112, &[StepForward], Eight),
                ev(Side::Left, 112, 134, &[StepForward, Beat], Eight),
                ev(Side::Left, 134, 146, &[Lunge, Hit], Six),
                ev(Side::Right, 83, 110, &[StepBackward], Six),
                ev(Side::Right, 110, 138, &[Fake], Six),
                ev(Side::Right, 138, 148, &[Counterattack, Hit], Six),
            ],
        )
    }

    #[test]
    fn attack_with_beat_beats_counterattack() {
        let v = evaluate_priority(&exchange(), &RuleBook::foil()).unwrap();
        assert_eq!(v.decision, Decision::Left);
        for id in [rules::ROW_INITIATE, rules::ROW_COUNTERATTACK, rules::ROW_TOUCH] {
            assert!(v.fired_rules.iter().any(|r| r == id), "{id} not fired: {:?}", v.fired_rules);
        }
        assert!(v.explanation.starts_with("Decision: Left\n"));
        assert!(v.explanation.contains("lunge, hit (134\u{2013}146)"), "{}", v.explanation);
        for id in &v.fired_rules {
            assert_eq!(v.explanation.matches(id.as_str()).count(), 1, "{id}");
        }
        assert_eq!(v.priority_trace.first().unwrap().0, 80);
        assert_eq!(v.priority_trace.last().unwrap().0, 148);
    }

    #[test]
    fn swapping_sides_swaps_decision() {
        let t = exchange();
        let a = evaluate_priority(&t, &RuleBook::foil()).unwrap();
        let b = evaluate_priority(&t.swapped(), &RuleBook::foil()).unwrap();
        assert_eq!(b.decision, Decision::Right);
        assert_eq!(a.decision.swapped(), b.decision);
    }

    #[test]
    fn short_attack_hands_over_priority() {
        let t = ExchangeTranscript::new(
            "short",
            vec![
                ev(Side::Left, 10, 40, &[Lunge], BladeLine::Six),
                ev(Side::Right, 41, 70, &[Lunge, Hit], BladeLine::Four),
            ],
        );
        let v = evaluate_priority(&t, &RuleBook::foil()).unwrap();
        assert_eq!(v.decision, Decision::Right);
        assert!(v.fired_rules.iter().any(|r| r == rules::ROW_FALL_SHORT));
    }

    #[test]
    fn no_hits_is_no_touch() {
        let t = ExchangeTranscript::new("quiet", vec![ev(Side::Left, 0, 20, &[StepForward], BladeLine::Six)]);
        let v = evaluate_priority(&t, &RuleBook::foil()).unwrap();
        assert_eq!(v.decision, Decision::None);
        assert!(v.explanation.starts_with("Decision: None"));
        assert!(v.explanation.contains("no touch"));
        let v = evaluate_priority(&t, &RuleBook::foil().without(rules::ROW_TOUCH)).unwrap();
        assert!(v.explanation.contains("no touch"));
    }

    #[test]
    fn simultaneous_double_hit_is_none() {
        let t = ExchangeTranscript::new(
            "simul",
            vec![
                ev(Side::Left, 0, 20, &[Lunge, Hit], BladeLine::Six),
                ev(Side::Right, 0, 20, &[Lunge, Hit], BladeLine::Six),
            ],
        );
        assert_eq!(evaluate_priority(&t, &RuleBook::foil()).unwrap().decision, Decision::None);
    }

    #[test]
    fn prompt_lists_rules_and_moves() {
        let p = format_prompt(&exchange(), &RuleBook::foil()).unwrap();
        let book = RuleBook::foil();
        for id in [rules::ROW_INITIATE, rules::ROW_FALL_SHORT] {
            assert!(p.contains(&book.get(id).unwrap().text), "{id} missing");
        }
        assert!(p.contains("Left: [80\u{2013}112] step forward (blade pos. 8); [112\u{2013}134] step forward + beat (blade pos. 8); [134\u{2013}146] lunge + hit (blade pos. 6)."));
        assert!(p.contains("Right: [83\u{2013}110] step backward (blade pos. 6)"));
        assert!(p.contains("Decision: Left"));
        assert_eq!(p, format_prompt(&exchange(), &RuleBook::foil()).unwrap());
        let empty = RuleBook { rules: vec![] };
        assert!(format_prompt(&exchange(), &empty).unwrap_err().to_string().contains("no rules"));
    }

    #[test]
    fn verdict_json_has_export_fields() {
        let v = evaluate_priority(&exchange(), &RuleBook::foil()).unwrap();
        let j: serde_json::Value = serde_json::from_str(&verdict_to_json(&v)).unwrap();
        assert_eq!(j["decision"], "Left");
        for k in ["explanation", "fired_rules", "priority_trace"] {
            assert!(j.get(k).is_some());
        }
    }

    /// Serves one request with `body` and returns the URL.
    fn serve_once(body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut req = vec![0u8; len];
            reader.read_exact(&mut req).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&req).unwrap();
            assert_eq!(req["temperature"], 0);
            let payload = serde_json::json!({ "text": body }).to_string();
            let mut s = reader.into_inner();
            write!(
                s,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                payload.len(),
                payload
            )
            .unwrap();
        });
        format!("http://{addr}/generate")
    }

    fn cfg(url: Option<String>) -> ExplainerConfig {
        ExplainerConfig {
            endpoint: url,
            timeout_ms: 2000,
            ..Default::default()
        }
    }

    #[test]
    fn explainer_response_is_parsed() {
        let engine = evaluate_priority(&exchange(), &RuleBook::foil()).unwrap();
        let url = serve_once("Decision: Left\nExplanation: left keeps the attack.\n!!!");
        let out = query_explainer("prompt", &cfg(Some(url)), &engine).unwrap();
        assert_eq!(out.source, VerdictSource::Explainer);
        assert_eq!(out.verdict.decision, Decision::Left);
        assert!(out.verdict.explanation.contains("left keeps the attack."));
        assert_eq!(out.verdict.fired_rules, engine.fired_rules);
    }

    #[test]
    fn unparsable_response_falls_back() {
        let engine = evaluate_priority(&exchange(), &RuleBook::foil()).unwrap();
        let url = serve_once("maybe left?");
        let out = query_explainer("prompt", &cfg(Some(url)), &engine).unwrap();
        assert_eq!(out.source, VerdictSource::Fallback);
        assert_eq!(out.verdict, engine);
        assert!(out.diagnostic.is_some());
    }

    #[test]
    fn unreachable_endpoint_falls_back_quickly() {
        let engine = evaluate_priority(&exchange(), &RuleBook::foil()).unwrap();
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let t0 = std::time::Instant::now();
        let out = query_explainer("p", &cfg(Some(format!("http://127.0.0.1:{port}/x"))), &engine).unwrap();
        assert_eq!(out.source, VerdictSource::Fallback);
        assert!(t0.elapsed().as_millis() < 2500);
    }

    #[test]
    fn missing_endpoint_without_fallback_errors() {
        let engine = evaluate_priority(&exchange(), &RuleBook::foil()).unwrap();
        let mut c = cfg(None);
        c.fallback = false;
        assert!(query_explainer("p", &c, &engine).is_err());
        c.fallback = true;
        assert_eq!(query_explainer("p", &c, &engine).unwrap().source, VerdictSource::Fallback);
    }

    #[test]
    fn parser_tolerates_trailing_lines() {
        assert_eq!(parse_ok("\nDecision: None\n\nExplanation: x\n!!!"), Decision::None);
        assert!(explainer::parse_response("Decision: maybe").is_err());
    }

    fn parse_ok(s: &str) -> Decision {
        explainer::parse_response(s).unwrap().0
    }
}

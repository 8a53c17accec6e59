//! Optional HTTP text-generation client that produces a verdict from a
//! prompt, falling back to the deterministic engine on any failure.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::engine::{Decision, Verdict};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainerConfig {
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_ms: u64,
    pub max_tokens: u32,
    /// Use the engine verdict when the explainer is unavailable or unparsable.
    pub fallback: bool,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            token_env: "RIPOSTE_EXPLAINER_TOKEN".into(),
            timeout_ms: 10_000,
            max_tokens: 256,
            fallback: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    Explainer,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainerOutcome {
    pub verdict: Verdict,
    pub source: VerdictSource,
    pub diagnostic: Option<String>,
}

/// Reads `Decision: X` from the first non-empty line and the explanation
/// from an `Explanation:` line if present; anything after is ignored.
pub fn parse_response(text: &str) -> Result<(Decision, Option<String>)> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines.next().ok_or_else(|| Error::Explainer("empty response".into()))?;
    let rest = first
        .strip_prefix("Decision:")
        .ok_or_else(|| Error::Explainer(format!("response does not start with a decision line: {first:?}")))?;
    let decision: Decision = rest.parse().map_err(|e: Error| Error::Explainer(e.to_string()))?;
    let explanation = lines
        .find_map(|l| l.strip_prefix("Explanation:"))
        .map(|s| s.trim().to_string());
    Ok((decision, explanation))
}

fn call(prompt: &str, url: &str, cfg: &ExplainerConfig) -> Result<String> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
        .build()
        .into();
    let body = serde_json::json!({
        "prompt": prompt,
        "max_tokens": cfg.max_tokens,
        "temperature": 0,
    });
    let mut req = agent.post(url);
    if let Ok(token) = std::env::var(&cfg.token_env) {
        req = req.header("Authorization", format!("Bearer {token}"));
    }
    let mut resp = req
        .send_json(&body)
        .map_err(|e| Error::Explainer(format!("request failed: {e}")))?;
    let v: serde_json::Value = resp
        .body_mut()
        .read_json()
        .map_err(|e| Error::Explainer(format!("unreadable response: {e}")))?;
    v.get("text")
        .and_then(|t| t.as_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Explainer("response has no \"text\" field".into()))
}

/// Asks the configured endpoint for a verdict. `engine` is the deterministic
/// verdict used for the fallback and for the rule trace.
pub fn query_explainer(prompt: &str, cfg: &ExplainerConfig, engine: &Verdict) -> Result<ExplainerOutcome> {
    let fallback = |diag: String| -> Result<ExplainerOutcome> {
        if !cfg.fallback {
            return Err(Error::Explainer(diag));
        }
        log::warn!("explainer fallback: {diag}");
        Ok(ExplainerOutcome {
            verdict: engine.clone(),
            source: VerdictSource::Fallback,
            diagnostic: Some(diag),
        })
    };
    let Some(url) = cfg.endpoint.as_deref() else {
        return fallback("no explainer endpoint configured".into());
    };
    let text = match call(prompt, url, cfg) {
        Ok(t) => t,
        Err(e) => return fallback(e.to_string()),
    };
    match parse_response(&text) {
        Ok((decision, explanation)) => {
            let mut verdict = engine.clone();
            verdict.decision = decision;
            verdict.explanation = match explanation {
                Some(x) => format!("Decision: {decision}\nExplanation: {x}"),
                None => format!("Decision: {decision}"),
            };
            let diagnostic = (decision != engine.decision)
                .then(|| format!("explainer decided {decision}, engine decided {}", engine.decision));
            Ok(ExplainerOutcome {
                verdict,
                source: VerdictSource::Explainer,
                diagnostic,
            })
        }
        Err(e) => fallback(e.to_string()),
    }
}

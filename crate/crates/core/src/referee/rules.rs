use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROW_INITIATE: &str = "ROW-A";
pub const ROW_INTERRUPT: &str = "ROW-B";
pub const ROW_FALL_SHORT: &str = "ROW-C";
pub const ROW_COUNTERATTACK: &str = "ROW-D";
pub const ROW_TOUCH: &str = "ROW-E";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub id: String,
    pub text: String,
    /// Move names that make this rule relevant to a transcript.
    pub keywords: Vec<String>,
}

/// Ordered rule list. A clause of the priority engine is active only when
/// its id is present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleBook {
    pub rules: Vec<Rule>,
}

fn rule(id: &str, text: &str, keywords: &[&str]) -> Rule {
    Rule {
        id: id.into(),
        text: text.into(),
        keywords: keywords.iter().map(|k| k.to_string()).collect(),
    }
}

impl RuleBook {
    /// Foil right-of-way over the twelve-move vocabulary.
    pub fn foil() -> Self {
        Self {
            rules: vec![
                rule(
                    ROW_INITIATE,
                    "Priority is given to the fencer who initiates the attack unless it is interrupted.",
                    &["step forward", "half step forward", "lunge", "fleche", "beat", "fake"],
                ),
                rule(
                    ROW_INTERRUPT,
                    "A parry or beat by the defending fencer interrupts the attack and gives priority to the defender.",
                    &["parry", "beat"],
                ),
                rule(
                    ROW_FALL_SHORT,
                    "If an attack is initiated but falls short or misses, priority shifts to the other fencer.",
                    &["lunge", "fleche"],
                ),
                rule(
                    ROW_COUNTERATTACK,
                    "A counterattack made into a continuing attack does not take priority.",
                    &["counterattack"],
                ),
                rule(
                    ROW_TOUCH,
                    "When both fencers hit, the fencer holding priority scores; a lone hit scores only with priority or against an opponent who never attacked.",
                    &["hit"],
                ),
            ],
        }
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn enabled(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn without(&self, id: &str) -> Self {
        Self {
            rules: self.rules.iter().filter(|r| r.id != id).cloned().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("rulebook: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("rulebook serialises")
    }
}

impl Default for RuleBook {
    fn default() -> Self {
        Self::foil()
    }
}

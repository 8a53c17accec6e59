//! Engine-wide configuration: one TOML file holding every tunable, with all
//! randomness derived from a single `seed` key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{CalibrationConfig, Variant};
use crate::mdt::{ModelConfig, TrainConfig};
use crate::referee::{ExplainerConfig, RuleBook};
use crate::synth::CorpusConfig;
use crate::tracker::TrackerConfig;
use crate::windowing::WindowConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefereeConfig {
    /// Rulebook TOML; the built-in foil rules when absent.
    pub rules_file: Option<PathBuf>,
    /// Rule ids switched off for audit runs.
    pub disabled_rules: Vec<String>,
    pub explainer: ExplainerConfig,
}

impl Default for RefereeConfig {
    fn default() -> Self {
        Self {
            rules_file: None,
            disabled_rules: Vec::new(),
            explainer: ExplainerConfig::default(),
        }
    }
}

impl RefereeConfig {
    pub fn rulebook(&self) -> Result<RuleBook> {
        let mut book = match &self.rules_file {
            Some(p) => RuleBook::load(p)?,
            None => RuleBook::foil(),
        };
        for id in &self.disabled_rules {
            if book.get(id).is_none() {
                return Err(Error::Invalid(format!("referee.disabled_rules: unknown rule id {id:?}")));
            }
            book = book.without(id);
        }
        Ok(book)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub variants: Vec<Variant>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub seed: u64,
    pub tracker: TrackerConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub window: WindowConfig,
    pub calibration: CalibrationConfig,
    pub referee: RefereeConfig,
    pub synth: CorpusConfig,
    pub ablation: AblationConfig,
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("engine config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.window.validate()?;
        self.calibration.validate()?;
        self.synth.validate()?;
        if self.ablation.variants.is_empty() {
            return Err(Error::Invalid("ablation.variants must not be empty".into()));
        }
        Ok(())
    }

    /// Training settings with the engine seed applied.
    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.seed = self.seed;
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips() {
        let c = EngineConfig::default();
        assert_eq!(EngineConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(EngineConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = EngineConfig::from_toml("[train]\nlearning_rate = 0.1\n").unwrap_err().to_string();
        assert!(e.contains("learning_rate"), "{e}");
        let e = EngineConfig::from_toml("bogus = 1\n").unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");
    }

    #[test]
    fn seed_flows_into_training() {
        let c = EngineConfig::from_toml("seed = 42\n").unwrap();
        assert_eq!(c.train_config().seed, 42);
        assert!(!c.to_toml().contains("[train]\nseed"));
    }

    #[test]
    fn disabled_rules_must_exist() {
        let mut c = EngineConfig::default();
        c.referee.disabled_rules = vec!["ROW-D".into()];
        assert!(c.referee.rulebook().unwrap().get("ROW-D").is_none());
        c.referee.disabled_rules = vec!["nope".into()];
        assert!(c.referee.rulebook().is_err());
    }
}

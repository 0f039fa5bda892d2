//! Layered run configuration: built-in defaults, overridden by an optional
//! TOML file, overridden in turn by command-line flags.

use anyhow::{Context, Result};
use irsgame::game::SchemeKind;
use irsgame::scenario::ScenarioConfig;
use irsgame::sweep::{SweepSpec, SweepVariable};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// On-disk configuration. Both sections are optional and partial: absent
/// keys keep their built-in defaults, unknown keys are rejected so typos
/// fail loudly instead of silently changing nothing.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub scenario: ScenarioConfig,
    pub sweep: SweepSettings,
}

/// The sweep half of the configuration; mirrors [`SweepSpec`] minus the
/// embedded scenario, which lives in its own section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<SchemeKind>,
    pub master_seed: u64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        let spec = SweepSpec::default();
        Self {
            variable: spec.variable,
            values: spec.values,
            trials: spec.trials,
            schemes: spec.schemes,
            master_seed: spec.master_seed,
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing configuration")
    }

    /// Assemble the full sweep request from both sections.
    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            variable: self.sweep.variable,
            values: self.sweep.values.clone(),
            trials: self.sweep.trials,
            schemes: self.sweep.schemes.clone(),
            scenario: self.scenario.clone(),
            master_seed: self.sweep.master_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = FileConfig::default();
        let text = cfg.to_toml().unwrap();
        let back: FileConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.scenario, cfg.scenario);
        assert_eq!(back.sweep.values, cfg.sweep.values);
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg: FileConfig =
            toml::from_str("[scenario]\nnum_modules = 9\n\n[sweep]\ntrials = 7\n").unwrap();
        assert_eq!(cfg.scenario.num_modules, 9);
        assert_eq!(cfg.scenario.num_users, ScenarioConfig::default().num_users);
        assert_eq!(cfg.sweep.trials, 7);
        assert_eq!(cfg.sweep.variable, SweepVariable::PMaxDbm);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<FileConfig>("[scenario]\nnum_module = 9\n").unwrap_err();
        assert!(err.to_string().contains("num_module"));
    }
}

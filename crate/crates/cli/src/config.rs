//! Run configuration: one JSON file per run, overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nsrl_core::grounding::{default_vocabulary_json, Vocabulary};
use nsrl_core::sim::{EnvConfig, PriceScenario, ToyConfig};
use nsrl_core::training::{DpcConfig, MfrlConfig};
use nsrl_core::worldmodel::{HeatSwitch, LearnConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Building environment file; built-in defaults when absent.
    pub env_path: Option<PathBuf>,
    /// Vocabulary file; the built-in heat-switch vocabulary when absent.
    pub vocabulary_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub months: Option<Vec<u32>>,
    pub scenario: PriceScenario,
    pub mfrl: MfrlConfig,
    pub toy: ToyConfig,
    pub dpc: DpcConfig,
    pub ilp: IlpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            env_path: None,
            vocabulary_path: None,
            out_dir: PathBuf::from("runs"),
            seed: 0,
            months: None,
            scenario: PriceScenario::Uniform,
            mfrl: MfrlConfig::default(),
            toy: ToyConfig::default(),
            dpc: DpcConfig::default(),
            ilp: IlpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IlpConfig {
    pub domain: String,
    /// Actions to probe; every vocabulary action when empty.
    pub actions: Vec<String>,
    pub simulator: HeatSwitch,
    pub learn: LearnConfig,
    /// Truth of each predicate in the initial state; unlisted ones are false.
    pub initial: BTreeMap<String, bool>,
    /// Required truth of each listed predicate.
    pub goal: BTreeMap<String, bool>,
}

impl Default for IlpConfig {
    fn default() -> Self {
        IlpConfig {
            domain: "heatswitch".into(),
            actions: vec!["pull_switch".into()],
            simulator: HeatSwitch::default(),
            learn: LearnConfig::default(),
            initial: [("cold".to_string(), true)].into_iter().collect(),
            goal: [("cold".to_string(), false)].into_iter().collect(),
        }
    }
}

/// Everything a command needs, loaded and validated up front.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub run: RunConfig,
    pub env: EnvConfig,
    pub vocabulary: Vocabulary,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // relative paths inside the file are relative to the file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.env_path, &mut cfg.vocabulary_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn resolve(self) -> Result<Resolved, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let env = match &self.env_path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                EnvConfig::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => EnvConfig::default(),
        };
        env.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let vocabulary = match &self.vocabulary_path {
            Some(p) => Vocabulary::load(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            None => Vocabulary::from_json(default_vocabulary_json()).map_err(|e| CliError::Config(e.to_string()))?,
        };
        if let Some(months) = &self.months {
            if months.is_empty() || months.iter().any(|m| !(1..=12).contains(m)) {
                return Err(CliError::Config(format!("months must be non-empty and within 1..=12, got {months:?}")));
            }
        }
        self.mfrl.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.dpc.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.toy.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let names = vocabulary.predicate_names();
        for p in self.ilp.initial.keys().chain(self.ilp.goal.keys()) {
            if !names.contains(p) {
                return Err(CliError::Config(format!("ilp state mentions unknown predicate `{p}`")));
            }
        }
        for a in &self.ilp.actions {
            vocabulary.action(a).map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(Resolved {
            run: self,
            env,
            vocabulary,
        })
    }
}

/// Parses `6` or `3,4,5` or `3-12` (and mixes like `1,6-8`).
pub fn parse_months(text: &str) -> Result<Vec<u32>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim) {
        let num = |s: &str| s.trim().parse::<u32>().map_err(|_| format!("bad month `{s}`"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty month range `{part}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    if let Some(m) = out.iter().find(|m| !(1..=12).contains(*m)) {
        return Err(format!("month {m} is not in 1..=12"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_lists() {
        assert_eq!(parse_months("6").unwrap(), vec![6]);
        assert_eq!(parse_months("1,6-8").unwrap(), vec![1, 6, 7, 8]);
        assert!(parse_months("13").is_err());
        assert!(parse_months("8-6").is_err());
        assert!(parse_months("x").is_err());
    }

    #[test]
    fn default_config_round_trips() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
        assert!(c.resolve().is_ok());
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let c = RunConfig {
            schema_version: 2,
            ..RunConfig::default()
        };
        assert!(matches!(c.resolve(), Err(CliError::Config(_))));
    }
}

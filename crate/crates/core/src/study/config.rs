use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::AgentConfig;
use crate::cohort::CohortConfig;
use crate::error::{Error, Result};
use crate::scheduler::BudgetRules;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase1Allocation {
    pub control: f64,
    pub random: f64,
}

/// Phase-2 split applied to every participant, stratified by phase-1 group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase2Allocation {
    pub random: f64,
    pub pcar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    /// Shared acceptance model retrained every night.
    Learned,
    /// Uniformly random gap-respecting ticks, `max_per_day` per day.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    pub mode: TimingMode,
    pub threshold: f64,
    pub budget_penalty: f64,
    /// Target of the budget loss: expected accepted prompts per
    /// participant-day, summed over the day's labelled prompts.
    pub daily_budget: f64,
    pub epochs: usize,
    pub step: f64,
    /// Weekdays of random triggering before the first trained model is used.
    pub warmup_days: u32,
    /// Deliver at the latest tick that still fits the day's remaining budget
    /// when the model has not fired by then.
    pub fill_budget: bool,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            mode: TimingMode::Learned,
            threshold: 0.5,
            budget_penalty: 0.1,
            daily_budget: 1.5,
            epochs: 500,
            step: 0.05,
            warmup_days: 2,
            fill_budget: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub n_participants: usize,
    #[serde(default = "default_weeks")]
    pub weeks_per_phase: u32,
    pub phase1: Phase1Allocation,
    pub phase2: Phase2Allocation,
    #[serde(default)]
    pub budget: BudgetRules,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub cohort: CohortConfig,
    #[serde(default)]
    pub timing: TimingConfig,
    /// Replay a PCAR participant's phase-1 history into its agent before
    /// phase 2 starts.
    #[serde(default = "yes")]
    pub pcar_warm_start: bool,
    /// Tab-separated catalog; the built-in starter catalog when absent.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_weeks() -> u32 {
    2
}

fn yes() -> bool {
    true
}

impl Default for StudyConfig {
    /// 28 participants, a quarter in control during phase 1, everyone split
    /// evenly between random and PCAR in phase 2.
    fn default() -> Self {
        StudyConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            n_participants: 28,
            weeks_per_phase: 2,
            phase1: Phase1Allocation {
                control: 0.25,
                random: 0.75,
            },
            phase2: Phase2Allocation {
                random: 0.5,
                pcar: 0.5,
            },
            budget: BudgetRules::default(),
            agent: AgentConfig::default(),
            cohort: CohortConfig::default(),
            timing: TimingConfig::default(),
            pcar_warm_start: true,
            catalog: None,
            output_dir: None,
        }
    }
}

fn fraction_pair(name: &str, a: f64, b: f64) -> Result<()> {
    let ok = (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) && ((a + b) - 1.0).abs() < 1e-9;
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} fractions must lie in [0, 1] and sum to 1")))
    }
}

impl StudyConfig {
    /// Parses and validates a config file. A relative catalog path is taken
    /// relative to the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = StudyConfig::from_json(&text)?;
        if let (Some(cat), Some(dir)) = (&cfg.catalog, path.parent()) {
            if cat.is_relative() {
                cfg.catalog = Some(dir.join(cat));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without touching the file system.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        StudyConfig::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == CONFIG_SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Config(format!(
                    "schema_version {v} is not supported (expected {CONFIG_SCHEMA_VERSION})"
                )))
            }
            None => return Err(Error::Config("missing schema_version".into())),
        }
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_participants == 0 {
            return Err(Error::Config("n_participants must be >= 1".into()));
        }
        if self.weeks_per_phase == 0 {
            return Err(Error::Config("weeks_per_phase must be >= 1".into()));
        }
        fraction_pair("phase1", self.phase1.control, self.phase1.random)?;
        fraction_pair("phase2", self.phase2.random, self.phase2.pcar)?;
        self.budget.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.agent.validate()?;
        self.cohort.validate()?;
        if self.cohort.trait_buckets as usize > self.agent.trait_buckets {
            return Err(Error::Config(format!(
                "cohort has {} trait buckets but the agent only {}",
                self.cohort.trait_buckets, self.agent.trait_buckets
            )));
        }
        let t = &self.timing;
        if !(t.threshold > 0.0 && t.threshold < 1.0) {
            return Err(Error::Config(format!("timing.threshold {} not in (0, 1)", t.threshold)));
        }
        if !(t.budget_penalty >= 0.0 && t.step > 0.0 && t.daily_budget >= 0.0) {
            return Err(Error::Config("timing penalty, step and budget must be positive".into()));
        }
        if let Some(cat) = &self.catalog {
            if !cat.is_file() {
                return Err(Error::Config(format!("catalog {} does not exist", cat.display())));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn total_weeks(&self) -> i64 {
        2 * self.weeks_per_phase as i64
    }

    pub fn phase2_start_day(&self) -> i64 {
        7 * self.weeks_per_phase as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "schema_version": 1,
            "seed": 3,
            "n_participants": 28,
            "phase1": {"control": 0.25, "random": 0.75},
            "phase2": {"random": 0.5, "pcar": 0.5}
        })
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = StudyConfig::from_value(minimal()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.weeks_per_phase, 2);
        assert_eq!(cfg.budget.max_per_day, 3);
        assert_eq!(cfg.agent, AgentConfig::default());
        assert!(cfg.pcar_warm_start);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = minimal();
        v["agent"] = serde_json::json!({"alpha": 0.2, "lamda": 0.5});
        assert!(matches!(StudyConfig::from_value(v), Err(Error::Config(_))));
        let mut v = minimal();
        v["extra"] = serde_json::json!(1);
        assert!(StudyConfig::from_value(v).is_err());
    }

    #[test]
    fn version_and_fractions_checked() {
        let mut v = minimal();
        v["schema_version"] = serde_json::json!(2);
        assert!(StudyConfig::from_value(v).is_err());
        let mut v = minimal();
        v["phase1"]["control"] = serde_json::json!(0.5);
        let cfg = StudyConfig::from_value(v).unwrap();
        assert!(cfg.validate().is_err());
        let cfg = StudyConfig {
            catalog: Some("/nonexistent/catalog.tsv".into()),
            ..StudyConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = StudyConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        let back = StudyConfig::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }
}

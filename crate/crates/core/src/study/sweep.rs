use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use super::config::StudyConfig;
use super::log::Group;
use super::report::{finish, final_week, final_week_mean, participant_means, Metric};
use super::runner::run_study;
use crate::error::{Error, Result};
use crate::seed::hash64;
use crate::stats::welch_t;

/// One study per swept value, flattened into a wide row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: String,
    /// The value as compact JSON.
    pub value: String,
    pub seed: u64,
    pub log_hash: String,
    pub records: usize,
    pub violations: usize,
    pub reward_pcar: Option<f64>,
    pub reward_random: Option<f64>,
    pub reward_control: Option<f64>,
    pub acceptance_pcar: Option<f64>,
    pub acceptance_random: Option<f64>,
    pub acceptance_control: Option<f64>,
    /// Welch test of final-week participant mean reward, PCAR vs random.
    pub welch_t: Option<f64>,
    pub welch_df: Option<f64>,
    pub welch_p: Option<f64>,
}

pub const SWEEP_COLUMNS: [&str; 15] = [
    "param",
    "value",
    "seed",
    "log_hash",
    "records",
    "violations",
    "reward_pcar",
    "reward_random",
    "reward_control",
    "acceptance_pcar",
    "acceptance_random",
    "acceptance_control",
    "welch_t",
    "welch_df",
    "welch_p",
];

/// Replaces the value at dotted `path` (`agent.lambda`, `seed`) in a
/// serialized config. Every component must already exist.
pub fn set_path(config: &mut Value, path: &str, value: Value) -> Result<()> {
    let unknown = || Error::UnknownParameter(path.to_string());
    if path.is_empty() {
        return Err(unknown());
    }
    let mut slot = config;
    for key in path.split('.') {
        slot = match slot {
            Value::Object(map) => map.get_mut(key).ok_or_else(unknown)?,
            Value::Array(items) => {
                let i: usize = key.parse().map_err(|_| unknown())?;
                items.get_mut(i).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
    }
    *slot = value;
    Ok(())
}

/// The config for the `index`-th value of a sweep. Unless the seed itself
/// is swept, each value gets the sub-seed `hash64(seed, index)`.
pub fn sweep_config(base: &StudyConfig, param: &str, value: &Value, index: usize) -> Result<StudyConfig> {
    let mut v = serde_json::to_value(base)?;
    set_path(&mut v, param, value.clone())?;
    if param != "seed" {
        v["seed"] = Value::from(hash64(base.seed, index as u64));
    }
    let cfg = StudyConfig::from_value(v)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one study per value. All configs are built and validated before
/// any simulation starts.
pub fn sweep(base: &StudyConfig, param: &str, values: &[Value]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Empty("sweep values"));
    }
    let configs = values
        .iter()
        .enumerate()
        .map(|(i, v)| sweep_config(base, param, v, i))
        .collect::<Result<Vec<_>>>()?;
    configs
        .par_iter()
        .zip(values)
        .map(|(cfg, value)| {
            let log = run_study(cfg)?;
            let fw = |g: Group, m: Metric| final_week_mean(&log, g, m);
            let welch = match (final_week(&log, Group::Pcar), final_week(&log, Group::Random)) {
                (Some(wp), Some(wr)) => welch_t(
                    &participant_means(&log, Group::Pcar, wp, Metric::Reward),
                    &participant_means(&log, Group::Random, wr, Metric::Reward),
                )
                .ok(),
                _ => None,
            };
            Ok(SweepRow {
                param: param.to_string(),
                value: serde_json::to_string(value)?,
                seed: cfg.seed,
                log_hash: log.hash()?,
                records: log.records.len(),
                violations: log.violations(&cfg.budget).len(),
                reward_pcar: fw(Group::Pcar, Metric::Reward),
                reward_random: fw(Group::Random, Metric::Reward),
                reward_control: fw(Group::Control, Metric::Reward),
                acceptance_pcar: fw(Group::Pcar, Metric::Acceptance),
                acceptance_random: fw(Group::Random, Metric::Acceptance),
                acceptance_control: fw(Group::Control, Metric::Acceptance),
                welch_t: welch.as_ref().map(|w| w.t),
                welch_df: welch.as_ref().map(|w| w.df),
                welch_p: welch.as_ref().map(|w| w.p),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    finish(w)
}

/// Parses a comma-separated value list. Each item is read as JSON when it
/// parses, otherwise taken as a string.
pub fn parse_values(list: &str) -> Vec<Value> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())))
        .collect()
}

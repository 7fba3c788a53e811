use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scheduler::BudgetRules;
use crate::time::Timestamp;

pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Control,
    Random,
    Pcar,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Control, Group::Random, Group::Pcar];

    pub fn name(self) -> &'static str {
        match self {
            Group::Control => "control",
            Group::Random => "random",
            Group::Pcar => "pcar",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One initiated prompt and everything that followed from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionRecord {
    pub seed: u64,
    pub pid: u32,
    pub group: Group,
    pub phase: u8,
    pub week: i64,
    pub day: i64,
    pub timestamp: Timestamp,
    /// Delivered attribute values by name; empty for EMA-only prompts and
    /// declined prompts.
    pub action: Vec<String>,
    pub intervention_id: Option<String>,
    /// Switch clock of each delivered value just before delivery.
    pub tau_before: Vec<i32>,
    pub accepted: bool,
    pub completed: bool,
    pub pre_stress: Option<i32>,
    pub post_stress: Option<i32>,
    pub reward: Option<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerSource {
    /// Uniform random gap-respecting plan.
    Random,
    /// Shared timing model above threshold.
    Model,
    /// The model left too little of the day to spend the remaining budget.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub pid: u32,
    pub timestamp: Timestamp,
    pub source: TriggerSource,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingEvent {
    /// Day whose night the model was trained in.
    pub day: i64,
    pub prompt_kind: String,
    pub examples: usize,
    pub loss_first: f64,
    pub loss_last: f64,
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMetadata {
    pub schema_version: u32,
    pub crate_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub n_participants: usize,
    pub weeks_per_phase: u32,
    pub phase2_start: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyLog {
    pub metadata: LogMetadata,
    /// Ordered by participant, then time.
    pub records: Vec<InterventionRecord>,
    pub triggers: Vec<TriggerEvent>,
    pub training: Vec<TrainingEvent>,
}

/// Counts behind the acceptance and completion rates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Funnel {
    pub initiated: usize,
    pub accepted: usize,
    pub declined: usize,
    pub completed: usize,
}

impl StudyLog {
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let log: StudyLog = serde_json::from_str(&text)?;
        if log.metadata.schema_version != LOG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "log schema_version {} is not supported",
                log.metadata.schema_version
            )));
        }
        Ok(log)
    }

    pub fn funnel(&self) -> Funnel {
        let mut f = Funnel::default();
        for r in &self.records {
            f.initiated += 1;
            if r.accepted {
                f.accepted += 1;
            } else {
                f.declined += 1;
            }
            if r.completed {
                f.completed += 1;
            }
        }
        f
    }

    /// Every way the log breaks the delivery rules or its own record
    /// invariants, as human-readable lines.
    pub fn violations(&self, rules: &BudgetRules) -> Vec<String> {
        let mut out = Vec::new();
        let mut by_pid: BTreeMap<u32, Vec<&InterventionRecord>> = BTreeMap::new();
        for r in &self.records {
            by_pid.entry(r.pid).or_default().push(r);
        }
        for (pid, recs) in by_pid {
            let mut per_day: BTreeMap<i64, u32> = BTreeMap::new();
            let mut prev: Option<Timestamp> = None;
            for r in recs {
                let ts = r.timestamp;
                if let Some(p) = prev {
                    if ts < p {
                        out.push(format!("pid {pid}: {ts} precedes {p}"));
                    } else if ts.minutes_since(p) < rules.min_gap_minutes {
                        out.push(format!("pid {pid}: gap {p} -> {ts} below {} min", rules.min_gap_minutes));
                    }
                }
                prev = Some(ts);
                let n = per_day.entry(ts.day()).or_default();
                *n += 1;
                if *n > rules.max_per_day {
                    out.push(format!("pid {pid}: more than {} prompts on day {}", rules.max_per_day, ts.day()));
                }
                if !rules.in_window(ts) {
                    out.push(format!("pid {pid}: {ts} outside the window"));
                }
                if rules.weekdays_only && !ts.weekday().is_weekday() {
                    out.push(format!("pid {pid}: {ts} falls on a weekend"));
                }
                if !ts.on_tick_grid() {
                    out.push(format!("pid {pid}: {ts} is off the tick grid"));
                }
                if r.completed && !r.accepted {
                    out.push(format!("pid {pid}: {ts} completed without acceptance"));
                }
                if r.reward.is_some() != r.completed {
                    out.push(format!("pid {pid}: {ts} reward presence disagrees with completion"));
                }
                if let (Some(pre), Some(post), Some(rw)) = (r.pre_stress, r.post_stress, r.reward) {
                    if pre - post != rw {
                        out.push(format!("pid {pid}: {ts} reward {rw} != {pre} - {post}"));
                    }
                }
                for s in [r.pre_stress, r.post_stress].into_iter().flatten() {
                    if !(1..=7).contains(&s) {
                        out.push(format!("pid {pid}: {ts} rating {s} outside 1..=7"));
                    }
                }
                if r.group == Group::Pcar && ts < self.metadata.phase2_start {
                    out.push(format!("pid {pid}: PCAR content at {ts} before phase 2"));
                }
                if r.group == Group::Control && r.intervention_id.is_some() {
                    out.push(format!("pid {pid}: control prompt at {ts} delivered content"));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pid: u32, ts: Timestamp) -> InterventionRecord {
        InterventionRecord {
            seed: 0,
            pid,
            group: Group::Random,
            phase: 1,
            week: ts.week(),
            day: ts.day(),
            timestamp: ts,
            action: vec![],
            intervention_id: None,
            tau_before: vec![],
            accepted: true,
            completed: true,
            pre_stress: Some(5),
            post_stress: Some(3),
            reward: Some(2),
        }
    }

    fn log(records: Vec<InterventionRecord>) -> StudyLog {
        StudyLog {
            metadata: LogMetadata {
                schema_version: LOG_SCHEMA_VERSION,
                crate_version: "test".into(),
                seed: 0,
                config_hash: String::new(),
                n_participants: 2,
                weeks_per_phase: 1,
                phase2_start: Timestamp::at(7, 0, 0),
            },
            records,
            triggers: vec![],
            training: vec![],
        }
    }

    #[test]
    fn clean_log_has_no_violations() {
        let l = log(vec![
            rec(0, Timestamp::at(0, 8, 0)),
            rec(0, Timestamp::at(0, 10, 0)),
            rec(1, Timestamp::at(0, 8, 0)),
        ]);
        assert!(l.violations(&BudgetRules::default()).is_empty());
    }

    #[test]
    fn violations_are_reported() {
        let rules = BudgetRules::default();
        let gap = log(vec![rec(0, Timestamp::at(0, 8, 0)), rec(0, Timestamp::at(0, 9, 0))]);
        assert_eq!(gap.violations(&rules).len(), 1);
        let weekend = log(vec![rec(0, Timestamp::at(5, 9, 0))]);
        assert_eq!(weekend.violations(&rules).len(), 1);
        let mut bad = rec(0, Timestamp::at(0, 9, 0));
        bad.reward = Some(1);
        assert_eq!(log(vec![bad]).violations(&rules).len(), 1);
        let mut early = rec(0, Timestamp::at(1, 9, 0));
        early.group = Group::Pcar;
        assert_eq!(log(vec![early]).violations(&rules).len(), 1);
    }

    #[test]
    fn funnel_conserves_prompts() {
        let mut a = rec(0, Timestamp::at(0, 8, 0));
        a.accepted = false;
        a.completed = false;
        a.reward = None;
        let f = log(vec![a, rec(0, Timestamp::at(0, 12, 0))]).funnel();
        assert_eq!(f.initiated, f.accepted + f.declined);
        assert_eq!((f.accepted, f.completed), (1, 1));
    }
}

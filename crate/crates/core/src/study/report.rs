//! Tabular and plot-ready views of a study log.
//!
//! Files written by [`write_report`]:
//! - `records.csv`: one row per initiated prompt, columns [`RECORD_COLUMNS`].
//! - `summary.csv`: weekly mean of means per group, phase and metric with a
//!   95% interval and the change from the previous week of the same phase,
//!   columns [`SUMMARY_CSV_COLUMNS`].
//! - `plot.json`: the summary as series per metric and group
//!   (`schema_version` 1).
//! - `welch.csv`: pairwise Welch tests between groups on participant means
//!   of the last week of each phase, columns [`WELCH_COLUMNS`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::log::{Group, StudyLog};
use crate::error::{Error, Result};
use crate::stats::{mean, mean_of_means, welch_t, Observation, SummaryRow};

pub const PLOT_SCHEMA_VERSION: u32 = 1;

pub const RECORD_COLUMNS: [&str; 17] = [
    "seed",
    "pid",
    "group",
    "phase",
    "week",
    "day",
    "minute",
    "clock",
    "action",
    "intervention_id",
    "tau_before",
    "accepted",
    "completed",
    "pre_stress",
    "post_stress",
    "reward",
    "weekday",
];

pub const SUMMARY_CSV_COLUMNS: [&str; 10] = [
    "group",
    "phase",
    "week",
    "metric",
    "mean",
    "ci_low",
    "ci_high",
    "n_participants",
    "degenerate",
    "delta_within_phase",
];

pub const WELCH_COLUMNS: [&str; 13] = [
    "phase", "week", "metric", "group_a", "group_b", "n_a", "n_b", "mean_a", "mean_b", "t", "df",
    "p", "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Pre minus post stress of completed prompts.
    Reward,
    /// Accepted share of initiated prompts.
    Acceptance,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Reward, Metric::Acceptance];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Reward => "reward",
            Metric::Acceptance => "acceptance",
        }
    }
}

/// Per-record observations of `metric`, labelled for [`mean_of_means`].
pub fn observations(log: &StudyLog, metric: Metric) -> Vec<Observation> {
    log.records
        .iter()
        .filter_map(|r| {
            let value = match metric {
                Metric::Reward => r.reward? as f64,
                Metric::Acceptance => r.accepted as u8 as f64,
            };
            Some(Observation {
                group: r.group.name().into(),
                phase: r.phase,
                week: r.week,
                metric: metric.name().into(),
                participant: r.pid.to_string(),
                value,
            })
        })
        .collect()
}

/// Per-participant means of `metric` for `group` in calendar `week`.
pub fn participant_means(log: &StudyLog, group: Group, week: i64, metric: Metric) -> Vec<f64> {
    let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for r in log.records.iter().filter(|r| r.group == group && r.week == week) {
        let v = match metric {
            Metric::Reward => match r.reward {
                Some(x) => x as f64,
                None => continue,
            },
            Metric::Acceptance => r.accepted as u8 as f64,
        };
        let e = acc.entry(r.pid).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    acc.values().map(|(s, n)| s / *n as f64).collect()
}

/// Last calendar week in which `group` has any record.
pub fn final_week(log: &StudyLog, group: Group) -> Option<i64> {
    log.records.iter().filter(|r| r.group == group).map(|r| r.week).max()
}

/// Mean of participant means of `metric` in `group`'s final week.
pub fn final_week_mean(log: &StudyLog, group: Group, metric: Metric) -> Option<f64> {
    let w = final_week(log, group)?;
    mean(&participant_means(log, group, w, metric)).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeeklyRow {
    #[serde(flatten)]
    pub summary: SummaryRow,
    pub delta_within_phase: Option<f64>,
}

pub fn weekly_summary(log: &StudyLog) -> Result<Vec<WeeklyRow>> {
    if log.records.is_empty() {
        return Err(Error::Empty("study log"));
    }
    let mut rows = Vec::new();
    for metric in Metric::ALL {
        rows.extend(mean_of_means(&observations(log, metric))?);
    }
    rows.sort_by(|a, b| {
        (&a.group, a.phase, &a.metric, a.week).cmp(&(&b.group, b.phase, &b.metric, b.week))
    });
    let mut out: Vec<WeeklyRow> = Vec::with_capacity(rows.len());
    for row in rows {
        let delta = out.last().and_then(|prev| {
            let p = &prev.summary;
            (p.group == row.group && p.phase == row.phase && p.metric == row.metric)
                .then_some(row.mean - p.mean)
        });
        out.push(WeeklyRow {
            summary: row,
            delta_within_phase: delta,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelchRow {
    pub phase: u8,
    pub week: i64,
    pub metric: String,
    pub group_a: String,
    pub group_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: Option<f64>,
    pub mean_b: Option<f64>,
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p: Option<f64>,
    pub status: String,
}

pub fn welch_table(log: &StudyLog) -> Result<Vec<WelchRow>> {
    if log.records.is_empty() {
        return Err(Error::Empty("study log"));
    }
    let mut out = Vec::new();
    let phases: BTreeSet<u8> = log.records.iter().map(|r| r.phase).collect();
    for phase in phases {
        let in_phase = || log.records.iter().filter(move |r| r.phase == phase);
        let week = in_phase().map(|r| r.week).max().expect("phase has records");
        let groups: BTreeSet<Group> = in_phase().map(|r| r.group).collect();
        let groups: Vec<Group> = groups.into_iter().collect();
        for metric in Metric::ALL {
            for i in 0..groups.len() {
                for j in i + 1..groups.len() {
                    let a = participant_means(log, groups[i], week, metric);
                    let b = participant_means(log, groups[j], week, metric);
                    let (t, df, p, status) = match welch_t(&a, &b) {
                        Ok(w) => (Some(w.t), Some(w.df), Some(w.p), "ok".to_string()),
                        Err(e) => (None, None, None, e.kind().to_string()),
                    };
                    out.push(WelchRow {
                        phase,
                        week,
                        metric: metric.name().into(),
                        group_a: groups[i].name().into(),
                        group_b: groups[j].name().into(),
                        n_a: a.len(),
                        n_b: b.len(),
                        mean_a: mean(&a).ok(),
                        mean_b: mean(&b).ok(),
                        t,
                        df,
                        p,
                        status,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotPoint {
    pub phase: u8,
    pub week: i64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotSeries {
    pub metric: String,
    pub group: String,
    pub points: Vec<PlotPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotData {
    pub schema_version: u32,
    pub units: BTreeMap<String, String>,
    pub series: Vec<PlotSeries>,
}

pub fn plot_data(rows: &[WeeklyRow]) -> PlotData {
    let mut series: BTreeMap<(String, String), Vec<PlotPoint>> = BTreeMap::new();
    for r in rows {
        let s = &r.summary;
        series
            .entry((s.metric.clone(), s.group.clone()))
            .or_default()
            .push(PlotPoint {
                phase: s.phase,
                week: s.week,
                mean: s.mean,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                n: s.n_participants,
            });
    }
    PlotData {
        schema_version: PLOT_SCHEMA_VERSION,
        units: BTreeMap::from([
            ("reward".to_string(), "Likert points (pre - post)".to_string()),
            ("acceptance".to_string(), "fraction of initiated prompts".to_string()),
        ]),
        series: series
            .into_iter()
            .map(|((metric, group), points)| PlotSeries {
                metric,
                group,
                points,
            })
            .collect(),
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn records_csv(log: &StudyLog) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORD_COLUMNS)?;
    for r in &log.records {
        w.write_record([
            r.seed.to_string(),
            r.pid.to_string(),
            r.group.name().to_string(),
            r.phase.to_string(),
            r.week.to_string(),
            r.day.to_string(),
            r.timestamp.0.to_string(),
            r.timestamp.to_string(),
            r.action.join("|"),
            r.intervention_id.clone().unwrap_or_default(),
            r.tau_before.iter().map(i32::to_string).collect::<Vec<_>>().join("|"),
            r.accepted.to_string(),
            r.completed.to_string(),
            opt(r.pre_stress),
            opt(r.post_stress),
            opt(r.reward),
            format!("{:?}", r.timestamp.weekday()),
        ])?;
    }
    finish(w)
}

pub fn summary_csv(rows: &[WeeklyRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_CSV_COLUMNS)?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            s.group.clone(),
            s.phase.to_string(),
            s.week.to_string(),
            s.metric.clone(),
            s.mean.to_string(),
            s.ci_low.to_string(),
            s.ci_high.to_string(),
            s.n_participants.to_string(),
            s.degenerate.to_string(),
            opt(r.delta_within_phase),
        ])?;
    }
    finish(w)
}

pub fn welch_csv(rows: &[WelchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(WELCH_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.phase.to_string(),
            r.week.to_string(),
            r.metric.clone(),
            r.group_a.clone(),
            r.group_b.clone(),
            r.n_a.to_string(),
            r.n_b.to_string(),
            opt(r.mean_a),
            opt(r.mean_b),
            opt(r.t),
            opt(r.df),
            opt(r.p),
            r.status.clone(),
        ])?;
    }
    finish(w)
}

pub(super) fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv flush failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

/// Paths of the files written by [`write_report`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportFiles {
    pub records: std::path::PathBuf,
    pub summary: std::path::PathBuf,
    pub plot: std::path::PathBuf,
    pub welch: std::path::PathBuf,
}

pub fn write_report(log: &StudyLog, out_dir: impl AsRef<Path>) -> Result<ReportFiles> {
    let dir = out_dir.as_ref();
    if log.records.is_empty() {
        return Err(Error::Empty("study log"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows = weekly_summary(log)?;
    let files = ReportFiles {
        records: dir.join("records.csv"),
        summary: dir.join("summary.csv"),
        plot: dir.join("plot.json"),
        welch: dir.join("welch.csv"),
    };
    let write = |p: &Path, s: String| fs::write(p, s).map_err(|e| Error::io(p, e));
    write(&files.records, records_csv(log)?)?;
    write(&files.summary, summary_csv(&rows)?)?;
    write(&files.plot, serde_json::to_string_pretty(&plot_data(&rows))? + "\n")?;
    write(&files.welch, welch_csv(&welch_table(log)?)?)?;
    Ok(files)
}

//! Welch t-test, Pearson correlation, mean-of-means summaries with Student-t
//! confidence intervals, least-squares trend and an exact sign test.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Empty("sample"));
    }
    Ok(x.iter().sum::<f64>() / x.len() as f64)
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::Degenerate("variance needs at least two values"));
    }
    let m = mean(x)?;
    Ok(x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64)
}

fn students_t(df: f64) -> Result<StudentsT> {
    StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// Two-sided tail probability `P(|T| >= |t|)` with `df` degrees of freedom.
pub fn t_two_sided(t: f64, df: f64) -> Result<f64> {
    let d = students_t(df)?;
    Ok((2.0 * d.sf(t.abs())).min(1.0))
}

pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level {p} not in (0, 1)")));
    }
    Ok(students_t(df)?.inverse_cdf(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

pub fn welch_t(x: &[f64], y: &[f64]) -> Result<WelchResult> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::Degenerate("welch_t needs at least two values per sample"));
    }
    let (vx, vy) = (
        variance(x)? / x.len() as f64,
        variance(y)? / y.len() as f64,
    );
    if vx + vy == 0.0 {
        return Err(Error::Degenerate("both samples have zero variance"));
    }
    let t = (mean(x)? - mean(y)?) / (vx + vy).sqrt();
    let df = (vx + vy).powi(2)
        / (vx * vx / (x.len() - 1) as f64 + vy * vy / (y.len() - 1) as f64);
    Ok(WelchResult {
        t,
        df,
        p: t_two_sided(t, df)?,
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("pearson needs at least two pairs"));
    }
    let (mx, my) = (mean(x)?, mean(y)?);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("pearson needs nonzero variance in both inputs"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Least-squares slope of `scores` against `0, 1, 2, ...`.
pub fn pss_trend(scores: &[f64]) -> Result<f64> {
    let idx: Vec<f64> = (0..scores.len()).map(|i| i as f64).collect();
    slope(&idx, scores)
}

pub fn slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("a trend needs at least two scores"));
    }
    let (mx, my) = (mean(x)?, mean(y)?);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("trend indices are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

/// One-sided exact sign test: `P(X >= successes)` for `X ~ Bin(trials, 1/2)`.
/// Ties are expected to be dropped by the caller.
pub fn sign_test(successes: u64, trials: u64) -> Result<f64> {
    if successes > trials {
        return Err(Error::InvalidParameter(format!(
            "{successes} successes out of {trials} trials"
        )));
    }
    if trials == 0 {
        return Ok(1.0);
    }
    if successes == 0 {
        return Ok(1.0);
    }
    let b = Binomial::new(0.5, trials).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(b.sf(successes - 1))
}

/// One observation of a metric for one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub group: String,
    pub phase: u8,
    pub week: i64,
    pub metric: String,
    pub participant: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: String,
    pub phase: u8,
    pub week: i64,
    pub metric: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_participants: usize,
    /// Set when a single participant makes the interval collapse to the mean.
    pub degenerate: bool,
}

/// CSV column order of [`SummaryRow`].
pub const SUMMARY_COLUMNS: [&str; 9] = [
    "group",
    "phase",
    "week",
    "metric",
    "mean",
    "ci_low",
    "ci_high",
    "n_participants",
    "degenerate",
];

/// Mean and 95% interval over per-participant means.
pub fn mean_ci(participant_means: &[f64]) -> Result<(f64, f64, f64, bool)> {
    let m = mean(participant_means)?;
    if participant_means.len() == 1 {
        return Ok((m, m, m, true));
    }
    let n = participant_means.len() as f64;
    let se = (variance(participant_means)? / n).sqrt();
    let half = t_quantile(0.975, n - 1.0)? * se;
    Ok((m, m - half, m + half, false))
}

/// Averages each participant first, then across participants, per
/// `(group, phase, week, metric)` cell. Rows come out sorted by that key.
pub fn mean_of_means(obs: &[Observation]) -> Result<Vec<SummaryRow>> {
    type Key = (String, u8, i64, String);
    let mut cells: BTreeMap<Key, BTreeMap<&str, (f64, usize)>> = BTreeMap::new();
    for o in obs {
        if !o.value.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite {} for participant {}",
                o.metric, o.participant
            )));
        }
        let cell = cells
            .entry((o.group.clone(), o.phase, o.week, o.metric.clone()))
            .or_default();
        let acc = cell.entry(o.participant.as_str()).or_insert((0.0, 0));
        acc.0 += o.value;
        acc.1 += 1;
    }
    let mut rows = Vec::with_capacity(cells.len());
    for ((group, phase, week, metric), parts) in cells {
        let means: Vec<f64> = parts.values().map(|(s, n)| s / *n as f64).collect();
        let (m, lo, hi, degenerate) = mean_ci(&means)?;
        rows.push(SummaryRow {
            group,
            phase,
            week,
            metric,
            mean: m,
            ci_low: lo,
            ci_high: hi,
            n_participants: means.len(),
            degenerate,
        });
    }
    Ok(rows)
}

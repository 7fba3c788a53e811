//! Simulated participants: hourly receptivity, momentary stress on a 1–7
//! Likert scale, and a fatigue-shaped response to interventions driven by the
//! switch clocks of the delivered attribute values.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::agent::{AttributeSchema, AttributeVector, Period};
use crate::error::{Error, Result};
use crate::seed::{hash64, rng_from, stream};
use crate::time::Timestamp;

pub const FIRST_HOUR: i64 = 8;
pub const LAST_HOUR: i64 = 21;
pub const HOURS: usize = (LAST_HOUR - FIRST_HOUR + 1) as usize;
pub const LIKERT_MIN: i32 = 1;
pub const LIKERT_MAX: i32 = 7;

/// Logit-scale hourly shape of the default receptivity profile, hours 8–21:
/// low at 8, a lunch dip at 13, peaks at 16 and 19 around a dip at 18.
const RECEPTIVITY_SHAPE: [f64; HOURS] = [
    -1.2, -0.3, 0.0, 0.1, 0.0, -0.4, 0.0, 0.3, 0.8, 0.2, -0.6, 0.8, 0.2, -0.3,
];

/// Default hourly stress offsets (Likert points), rising into the afternoon.
const STRESS_SHAPE: [f64; HOURS] = [
    -0.2, -0.1, 0.0, 0.1, 0.1, 0.2, 0.2, 0.3, 0.3, 0.2, 0.1, 0.0, -0.1, -0.2,
];

/// Which receptivity curve governs a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Intervention,
    /// EMA-only prompt sent to the control group.
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortConfig {
    /// Group-mean acceptance of intervention prompts.
    pub intervention_acceptance: f64,
    /// Group-mean acceptance of EMA-only control prompts.
    pub control_acceptance: f64,
    /// Standard deviation of a participant's mean acceptance around the group mean.
    pub acceptance_spread: f64,
    /// Per-participant logit jitter of the hourly receptivity shape.
    pub receptivity_jitter: f64,
    pub completion_prob: f64,
    pub baseline_mean: f64,
    pub baseline_sd: f64,
    pub hourly_offset_sd: f64,
    /// Momentary noise of a stress rating.
    pub pre_sigma: f64,
    /// Noise of the post-intervention rating around `pre - effect`.
    pub noise_sigma: f64,
    /// Mean drift of a control follow-up rating relative to the first.
    pub idle_drift: f64,
    pub fatigue_decay: f64,
    pub recovery_rounds: u32,
    /// Mean base effect contributed by each attribute.
    pub effect_mean: f64,
    /// Spread of base effects across values of one attribute.
    pub effect_value_sd: f64,
    /// Extra spread of a value's effect across periods of the day.
    pub effect_period_sd: f64,
    /// Logit-scale engagement gained per Likert point of expected stress
    /// reduction above `engagement_reference`, per completed intervention.
    pub engagement_rate: f64,
    pub engagement_reference: f64,
    pub engagement_min: f64,
    pub engagement_max: f64,
    pub trait_buckets: u8,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            intervention_acceptance: 0.50,
            control_acceptance: 0.77,
            acceptance_spread: 0.08,
            receptivity_jitter: 0.25,
            completion_prob: 0.916,
            baseline_mean: 4.0,
            baseline_sd: 0.7,
            hourly_offset_sd: 0.3,
            pre_sigma: 1.0,
            noise_sigma: 0.8,
            idle_drift: 0.15,
            fatigue_decay: 0.6,
            recovery_rounds: 1,
            effect_mean: 0.15,
            effect_value_sd: 0.8,
            effect_period_sd: 0.2,
            engagement_rate: 0.3,
            engagement_reference: 0.3,
            engagement_min: -3.0,
            engagement_max: 3.0,
            trait_buckets: 2,
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        for (name, v) in [
            ("intervention_acceptance", self.intervention_acceptance),
            ("control_acceptance", self.control_acceptance),
            ("completion_prob", self.completion_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name}={v} not in [0, 1]"));
            }
        }
        if !(self.fatigue_decay > 0.0 && self.fatigue_decay < 1.0) {
            return bad(format!("fatigue_decay={} not in (0, 1)", self.fatigue_decay));
        }
        if self.recovery_rounds == 0 {
            return bad("recovery_rounds must be >= 1".into());
        }
        for (name, v) in [
            ("acceptance_spread", self.acceptance_spread),
            ("receptivity_jitter", self.receptivity_jitter),
            ("baseline_sd", self.baseline_sd),
            ("hourly_offset_sd", self.hourly_offset_sd),
            ("pre_sigma", self.pre_sigma),
            ("noise_sigma", self.noise_sigma),
            ("effect_value_sd", self.effect_value_sd),
            ("effect_period_sd", self.effect_period_sd),
            ("engagement_rate", self.engagement_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name}={v} must be finite and >= 0"));
            }
        }
        if !(self.engagement_min <= 0.0 && self.engagement_max >= 0.0) {
            return bad("need engagement_min <= 0 <= engagement_max".into());
        }
        if self.trait_buckets == 0 {
            return bad("trait_buckets must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantModel {
    pub pid: u32,
    pub baseline_stress: f64,
    pub hourly_stress_offsets: Vec<f64>,
    /// Acceptance probability of intervention prompts per hour 8..=21.
    pub receptivity_curve: Vec<f64>,
    /// Acceptance probability of EMA-only prompts per hour 8..=21.
    pub control_receptivity: Vec<f64>,
    pub fatigue_decay: f64,
    pub recovery_rounds: u32,
    /// `effect_table[attribute][value][period]`, Likert points; the effect of
    /// an action is the sum over attributes.
    pub effect_table: Vec<Vec<[f64; 3]>>,
    pub pre_sigma: f64,
    pub noise_sigma: f64,
    pub idle_drift: f64,
    pub completion_prob: f64,
    pub trait_bucket: u8,
    pub seed: u64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Shifts `shape` on the logit scale so the mean of the resulting
/// probabilities equals `target`.
fn calibrate_curve(shape: &[f64], target: f64) -> Vec<f64> {
    let mean_at = |s: f64| shape.iter().map(|x| sigmoid(x + s)).sum::<f64>() / shape.len() as f64;
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    shape.iter().map(|x| sigmoid(x + s)).collect()
}

/// Round half away from zero, then clamp to the Likert range.
pub fn likert(x: f64) -> i32 {
    (x.round() as i32).clamp(LIKERT_MIN, LIKERT_MAX)
}

/// Fatigue multiplier of an attribute value played at clock `tau`: linear
/// recovery `min(1, tau / rho)` when rested, geometric decay `mu^|tau|` under
/// repetition.
pub fn fatigue_factor(tau: i32, mu: f64, rho: u32) -> f64 {
    if tau > 0 {
        (tau as f64 / rho as f64).min(1.0)
    } else {
        mu.powi(tau.abs())
    }
}

fn window_hour(ts: Timestamp) -> Result<usize> {
    let m = ts.minute_of_day();
    if !(FIRST_HOUR * 60..=LAST_HOUR * 60).contains(&m) {
        return Err(Error::OutOfWindow(ts.to_string()));
    }
    Ok((ts.hour() - FIRST_HOUR) as usize)
}

/// Draws `n` participants around the default profile. Participant `pid`'s
/// parameters depend only on `(seed, pid)`.
pub fn default_cohort(
    n: usize,
    schema: &AttributeSchema,
    cfg: &CohortConfig,
    seed: u64,
) -> Result<Vec<ParticipantModel>> {
    if n == 0 {
        return Err(Error::InvalidParameter("cohort needs n >= 1".into()));
    }
    cfg.validate()?;
    (0..n as u32)
        .map(|pid| draw_participant(pid, schema, cfg, seed))
        .collect()
}

fn normal(mean: f64, sd: f64) -> Result<Normal<f64>> {
    Normal::new(mean, sd).map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn draw_participant(
    pid: u32,
    schema: &AttributeSchema,
    cfg: &CohortConfig,
    seed: u64,
) -> Result<ParticipantModel> {
    let pseed = hash64(hash64(seed, stream::COHORT), pid as u64);
    let mut rng = rng_from(pseed);
    let z = normal(0.0, 1.0)?;

    let baseline = (cfg.baseline_mean + cfg.baseline_sd * z.sample(&mut rng)).clamp(1.0, 7.0);
    let offsets = STRESS_SHAPE
        .iter()
        .map(|s| s + cfg.hourly_offset_sd * z.sample(&mut rng))
        .collect();

    let shape: Vec<f64> = RECEPTIVITY_SHAPE
        .iter()
        .map(|s| s + cfg.receptivity_jitter * z.sample(&mut rng))
        .collect();
    let target = |mean: f64, rng: &mut crate::seed::SimRng| {
        (mean + cfg.acceptance_spread * z.sample(rng)).clamp(0.02, 0.98)
    };
    let m_int = target(cfg.intervention_acceptance, &mut rng);
    let m_ctl = target(cfg.control_acceptance, &mut rng);

    let per_attr = cfg.effect_mean;
    let mut effects = Vec::with_capacity(schema.len());
    for k in schema.sizes() {
        let mut values = Vec::with_capacity(k);
        for _ in 0..k {
            let base = per_attr + cfg.effect_value_sd * z.sample(&mut rng);
            let mut row = [0.0; 3];
            for cell in &mut row {
                *cell = (base + cfg.effect_period_sd * z.sample(&mut rng)).clamp(-1.0, 1.0);
            }
            values.push(row);
        }
        effects.push(values);
    }

    Ok(ParticipantModel {
        pid,
        baseline_stress: baseline,
        hourly_stress_offsets: offsets,
        receptivity_curve: calibrate_curve(&shape, m_int),
        control_receptivity: calibrate_curve(&shape, m_ctl),
        fatigue_decay: cfg.fatigue_decay,
        recovery_rounds: cfg.recovery_rounds,
        effect_table: effects,
        pre_sigma: cfg.pre_sigma,
        noise_sigma: cfg.noise_sigma,
        idle_drift: cfg.idle_drift,
        completion_prob: cfg.completion_prob,
        trait_bucket: rng.random_range(0..cfg.trait_buckets),
        seed: pseed,
    })
}

/// The default receptivity profile scaled to `mean` with no participant jitter.
pub fn default_profile(mean: f64) -> Vec<f64> {
    calibrate_curve(&RECEPTIVITY_SHAPE, mean)
}

impl ParticipantModel {
    pub fn receptivity(&self, ts: Timestamp, kind: PromptKind) -> Result<f64> {
        let h = window_hour(ts)?;
        Ok(match kind {
            PromptKind::Intervention => self.receptivity_curve[h],
            PromptKind::Control => self.control_receptivity[h],
        })
    }

    /// Bernoulli draw at the hour's receptivity. A refusal also stands for a
    /// prompt left unanswered until the session timed out.
    pub fn accept<R: Rng + ?Sized>(&self, ts: Timestamp, kind: PromptKind, rng: &mut R) -> Result<bool> {
        self.accept_engaged(ts, kind, 0.0, rng)
    }

    /// As [`accept`](Self::accept) with the receptivity shifted by
    /// `engagement` on the logit scale.
    pub fn accept_engaged<R: Rng + ?Sized>(
        &self,
        ts: Timestamp,
        kind: PromptKind,
        engagement: f64,
        rng: &mut R,
    ) -> Result<bool> {
        let r = self.receptivity(ts, kind)?;
        let p = if engagement == 0.0 {
            r
        } else {
            sigmoid((r / (1.0 - r)).ln() + engagement)
        };
        Ok(rng.random::<f64>() < p)
    }

    pub fn completes<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.random::<f64>() < self.completion_prob
    }

    pub fn stress_mean(&self, ts: Timestamp) -> Result<f64> {
        Ok(self.baseline_stress + self.hourly_stress_offsets[window_hour(ts)?])
    }

    pub fn pre_stress<R: Rng + ?Sized>(&self, ts: Timestamp, rng: &mut R) -> Result<i32> {
        let mu = self.stress_mean(ts)?;
        Ok(likert(mu + self.pre_sigma * gauss(rng)))
    }

    /// Exact mean of [`pre_stress`](Self::pre_stress) including the effect of
    /// rounding and clamping.
    pub fn expected_pre_stress(&self, ts: Timestamp) -> Result<f64> {
        expected_likert(self.stress_mean(ts)?, self.pre_sigma)
    }

    /// Expected stress reduction of `action` given each attribute's clock
    /// before delivery.
    pub fn effect(&self, action: &AttributeVector, taus_before: &[i32], period: Period) -> Result<f64> {
        if action.0.len() != self.effect_table.len() || taus_before.len() != action.0.len() {
            return Err(Error::DimensionMismatch {
                expected: self.effect_table.len(),
                got: action.0.len().min(taus_before.len()),
            });
        }
        let mut total = 0.0;
        for (p, (&v, &tau)) in action.0.iter().zip(taus_before).enumerate() {
            let row = self.effect_table[p].get(v).ok_or_else(|| {
                Error::InvalidAction(format!("value {v} out of range for attribute {p}"))
            })?;
            total += row[period.index()] * fatigue_factor(tau, self.fatigue_decay, self.recovery_rounds);
        }
        Ok(total)
    }

    pub fn post_stress<R: Rng + ?Sized>(
        &self,
        pre: i32,
        action: &AttributeVector,
        taus_before: &[i32],
        period: Period,
        rng: &mut R,
    ) -> Result<i32> {
        if !(LIKERT_MIN..=LIKERT_MAX).contains(&pre) {
            return Err(Error::InvalidParameter(format!("pre-stress {pre} outside 1..=7")));
        }
        let effect = self.effect(action, taus_before, period)?;
        Ok(likert(pre as f64 - effect + self.noise_sigma * gauss(rng)))
    }

    /// Follow-up rating after an EMA-only prompt: an independent rating with
    /// a small upward drift.
    pub fn control_post_stress<R: Rng + ?Sized>(&self, ts: Timestamp, rng: &mut R) -> Result<i32> {
        let mu = self.stress_mean(ts)? + self.idle_drift;
        Ok(likert(mu + self.pre_sigma * gauss(rng)))
    }
}

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

/// `E[likert(mu + sigma * Z)]` for standard normal `Z`.
pub fn expected_likert(mu: f64, sigma: f64) -> Result<f64> {
    if sigma == 0.0 {
        return Ok(likert(mu) as f64);
    }
    let d = NormalDist::new(mu, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut e = 0.0;
    for k in LIKERT_MIN..=LIKERT_MAX {
        let lo = if k == LIKERT_MIN { 0.0 } else { d.cdf(k as f64 - 0.5) };
        let hi = if k == LIKERT_MAX { 1.0 } else { d.cdf(k as f64 + 0.5) };
        e += k as f64 * (hi - lo);
    }
    Ok(e)
}

/// Engagement (a logit shift of acceptance) after completing content whose
/// expected stress reduction was `effect`.
pub fn update_engagement(engagement: f64, effect: f64, cfg: &CohortConfig) -> f64 {
    (engagement + cfg.engagement_rate * (effect - cfg.engagement_reference))
        .clamp(cfg.engagement_min, cfg.engagement_max)
}

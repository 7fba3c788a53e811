//! Delivery timing under a daily budget: hard eligibility rules on a
//! 5-minute tick grid and a linear-sigmoid acceptance model trained with a
//! squared-error loss plus a budget penalty.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{Timestamp, MINUTES_PER_DAY, TICK_MINUTES};

pub const FEATURE_DIM: usize = 10;

/// Cap on minutes-since-last-delivery before normalisation: one full window.
const SINCE_CAP: f64 = 780.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetRules {
    pub max_per_day: u32,
    pub min_gap_minutes: i64,
    /// Inclusive window bounds, minutes after midnight.
    pub window_start: i64,
    pub window_end: i64,
    pub weekdays_only: bool,
}

impl Default for BudgetRules {
    fn default() -> Self {
        BudgetRules {
            max_per_day: 3,
            min_gap_minutes: 120,
            window_start: 8 * 60,
            window_end: 21 * 60,
            weekdays_only: true,
        }
    }
}

impl BudgetRules {
    pub fn validate(&self) -> Result<()> {
        if self.max_per_day == 0 {
            return Err(Error::InvalidParameter("max_per_day must be >= 1".into()));
        }
        if self.min_gap_minutes < 0 {
            return Err(Error::InvalidParameter("min_gap_minutes must be >= 0".into()));
        }
        if !(0 <= self.window_start && self.window_start < self.window_end && self.window_end < MINUTES_PER_DAY) {
            return Err(Error::InvalidParameter(format!(
                "window [{}, {}] is not inside one day",
                self.window_start, self.window_end
            )));
        }
        if self.window_start % TICK_MINUTES != 0 || self.window_end % TICK_MINUTES != 0 {
            return Err(Error::InvalidParameter("window bounds must lie on the tick grid".into()));
        }
        Ok(())
    }

    pub fn in_window(&self, now: Timestamp) -> bool {
        (self.window_start..=self.window_end).contains(&now.minute_of_day())
    }

    pub fn window_minutes(&self) -> i64 {
        self.window_end - self.window_start
    }

    /// Tick timestamps of one day's window.
    pub fn ticks(&self, day: i64) -> impl Iterator<Item = Timestamp> + '_ {
        (self.window_start..=self.window_end)
            .step_by(TICK_MINUTES as usize)
            .map(move |m| Timestamp(day * MINUTES_PER_DAY + m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetState {
    pub rules: BudgetRules,
    /// Day `delivered_today` refers to.
    pub day: i64,
    pub delivered_today: u32,
    pub last_delivery: Option<Timestamp>,
}

impl BudgetState {
    pub fn new(rules: BudgetRules) -> Self {
        BudgetState {
            rules,
            day: 0,
            delivered_today: 0,
            last_delivery: None,
        }
    }

    fn delivered_on(&self, day: i64) -> u32 {
        if day == self.day {
            self.delivered_today
        } else {
            0
        }
    }

    pub fn remaining(&self, now: Timestamp) -> u32 {
        self.rules.max_per_day.saturating_sub(self.delivered_on(now.day()))
    }

    pub fn eligible(&self, now: Timestamp) -> bool {
        let r = &self.rules;
        (!r.weekdays_only || now.weekday().is_weekday())
            && r.in_window(now)
            && self.delivered_on(now.day()) < r.max_per_day
            && self
                .last_delivery
                .is_none_or(|last| now.minutes_since(last) >= r.min_gap_minutes)
    }

    /// True at the last eligible tick from which every remaining delivery of
    /// the day still fits before the window closes.
    pub fn must_fire(&self, now: Timestamp) -> bool {
        let left = self.remaining(now) as i64;
        if left == 0 || !self.eligible(now) {
            return false;
        }
        let latest = self.rules.window_end - (left - 1) * self.rules.min_gap_minutes;
        now.minute_of_day() + TICK_MINUTES > latest
    }

    /// Books a delivery at `now`; refuses if any rule would be broken.
    pub fn record_delivery(&mut self, now: Timestamp) -> Result<()> {
        if !self.eligible(now) {
            return Err(Error::InvalidParameter(format!(
                "delivery at {now} violates the budget"
            )));
        }
        if now.day() != self.day {
            self.day = now.day();
            self.delivered_today = 0;
        }
        self.delivered_today += 1;
        self.last_delivery = Some(now);
        Ok(())
    }
}

/// Time-of-day, weekday and budget features of a candidate tick.
pub fn features(now: Timestamp, b: &BudgetState) -> Vec<f64> {
    let mut x = Vec::with_capacity(FEATURE_DIM);
    let angle = std::f64::consts::TAU * now.minute_of_day() as f64 / MINUTES_PER_DAY as f64;
    x.push(angle.sin());
    x.push(angle.cos());
    let wd = now.weekday().index();
    for d in 0..5 {
        x.push(if d == wd { 1.0 } else { 0.0 });
    }
    x.push(match b.last_delivery {
        Some(last) => (now.minutes_since(last).max(0) as f64).min(SINCE_CAP) / SINCE_CAP,
        None => 1.0,
    });
    x.push(b.remaining(now) as f64 / b.rules.max_per_day as f64);
    let left = (b.rules.window_end - now.minute_of_day()).clamp(0, b.rules.window_minutes());
    x.push(left as f64 / b.rules.window_minutes() as f64);
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    pub budget_penalty: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel::zeros(FEATURE_DIM)
    }
}

/// One labelled prompt for training. `group` identifies the participant-day
/// whose expected trigger count the budget term constrains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: f64,
    pub group: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub daily_budget: f64,
    pub epochs: usize,
    pub step: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            daily_budget: 3.0,
            epochs: 500,
            step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub model: TimingModel,
    /// Training loss before the first epoch and after each one.
    pub losses: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl TimingModel {
    pub fn zeros(dim: usize) -> Self {
        TimingModel {
            weights: vec![0.0; dim],
            bias: 0.0,
            threshold: 0.5,
            budget_penalty: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.weights.iter().chain([&self.bias]).all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("timing model has non-finite parameters".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold {} not in (0, 1)",
                self.threshold
            )));
        }
        if !(self.budget_penalty >= 0.0 && self.budget_penalty.is_finite()) {
            return Err(Error::InvalidParameter("budget_penalty must be >= 0".into()));
        }
        Ok(())
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        let z = self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias;
        Ok(sigmoid(z))
    }

    /// Trigger iff `now` is on the tick grid, the budget allows a delivery
    /// and the predicted acceptance reaches the threshold.
    pub fn decide(&self, b: &BudgetState, now: Timestamp) -> bool {
        if !now.on_tick_grid() || !b.eligible(now) {
            return false;
        }
        self.score(&features(now, b))
            .map(|p| p >= self.threshold)
            .unwrap_or(false)
    }

    /// Composite training loss: mean squared error plus the budget penalty on
    /// the mean expected triggers per group.
    pub fn loss(&self, data: &[Example], daily_budget: f64) -> Result<f64> {
        let (mse, mean_daily, _) = self.forward(data)?;
        Ok(mse + self.budget_penalty * (mean_daily - daily_budget).powi(2))
    }

    fn forward(&self, data: &[Example]) -> Result<(f64, f64, Vec<f64>)> {
        let mut groups: Vec<u64> = data.iter().map(|e| e.group).collect();
        groups.sort_unstable();
        groups.dedup();
        let mut p = Vec::with_capacity(data.len());
        let mut sq = 0.0;
        for e in data {
            let pi = self.score(&e.features)?;
            sq += (pi - e.label).powi(2);
            p.push(pi);
        }
        let n = data.len() as f64;
        let mean_daily = p.iter().sum::<f64>() / groups.len() as f64;
        Ok((sq / n, mean_daily, p))
    }

    /// Full-batch gradient descent from the current parameters.
    pub fn train(&self, data: &[Example], params: &TrainParams) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(Error::Empty("training history"));
        }
        self.validate()?;
        let dim = self.weights.len();
        let mut groups: Vec<u64> = data.iter().map(|e| e.group).collect();
        groups.sort_unstable();
        groups.dedup();
        let n = data.len() as f64;
        let g = groups.len() as f64;

        let mut m = self.clone();
        let mut losses = Vec::with_capacity(params.epochs + 1);
        losses.push(m.loss(data, params.daily_budget)?);
        for _ in 0..params.epochs {
            let (_, mean_daily, p) = m.forward(data)?;
            let budget_term = 2.0 * m.budget_penalty * (mean_daily - params.daily_budget) / g;
            let mut gw = vec![0.0; dim];
            let mut gb = 0.0;
            for (e, &pi) in data.iter().zip(&p) {
                let dz = (2.0 * (pi - e.label) / n + budget_term) * pi * (1.0 - pi);
                for (gj, xj) in gw.iter_mut().zip(&e.features) {
                    *gj += dz * xj;
                }
                gb += dz;
            }
            for (w, gj) in m.weights.iter_mut().zip(&gw) {
                *w -= params.step * gj;
            }
            m.bias -= params.step * gb;
            losses.push(m.loss(data, params.daily_budget)?);
        }
        Ok(TrainReport { model: m, losses })
    }
}

/// Uniform-random triggering among gap-respecting tick sets of one day.
pub fn random_trigger_plan<R: Rng + ?Sized>(
    rules: &BudgetRules,
    day: i64,
    count: u32,
    rng: &mut R,
) -> Result<Vec<Timestamp>> {
    let count = count.min(rules.max_per_day) as usize;
    if count == 0 {
        return Ok(Vec::new());
    }
    let ticks: Vec<Timestamp> = rules.ticks(day).collect();
    let span = (count as i64 - 1) * rules.min_gap_minutes;
    if span > rules.window_minutes() {
        return Err(Error::InvalidParameter(format!(
            "{count} deliveries do not fit the window with the gap rule"
        )));
    }
    // rejection sampling keeps every admissible set equally likely
    loop {
        let mut pick: Vec<usize> = sample(rng, ticks.len(), count).into_vec();
        pick.sort_unstable();
        let ok = pick
            .windows(2)
            .all(|w| ticks[w[1]].minutes_since(ticks[w[0]]) >= rules.min_gap_minutes);
        if ok {
            return Ok(pick.into_iter().map(|i| ticks[i]).collect());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use crate::time::Weekday;

    // day 0 is a Monday
    const TUESDAY: i64 = 1;
    const SATURDAY: i64 = 5;

    fn fresh() -> BudgetState {
        BudgetState::new(BudgetRules::default())
    }

    #[test]
    fn eligibility_examples() {
        assert_eq!(Timestamp::at(SATURDAY, 10, 0).weekday(), Weekday::Saturday);
        assert!(!fresh().eligible(Timestamp::at(SATURDAY, 10, 0)));

        let mut b = fresh();
        b.record_delivery(Timestamp::at(TUESDAY, 9, 0)).unwrap();
        assert!(!b.eligible(Timestamp::at(TUESDAY, 10, 0)));
        assert!(b.eligible(Timestamp::at(TUESDAY, 11, 0)));

        assert!(!fresh().eligible(Timestamp::at(TUESDAY, 21, 5)));
        assert!(fresh().eligible(Timestamp::at(TUESDAY, 21, 0)));
        assert!(!fresh().eligible(Timestamp::at(TUESDAY, 7, 55)));

        let b = BudgetState {
            rules: BudgetRules::default(),
            day: TUESDAY,
            delivered_today: 2,
            last_delivery: Some(Timestamp::at(TUESDAY, 7, 50)),
        };
        assert!(b.eligible(Timestamp::at(TUESDAY, 10, 0)));
    }

    #[test]
    fn daily_cap_and_rollover() {
        let mut b = fresh();
        for h in [8, 10, 12] {
            b.record_delivery(Timestamp::at(TUESDAY, h, 0)).unwrap();
        }
        assert!(!b.eligible(Timestamp::at(TUESDAY, 18, 0)));
        assert!(b.record_delivery(Timestamp::at(TUESDAY, 18, 0)).is_err());
        assert!(b.eligible(Timestamp::at(TUESDAY + 1, 8, 0)));
        b.record_delivery(Timestamp::at(TUESDAY + 1, 8, 0)).unwrap();
        assert_eq!(b.delivered_today, 1);
    }

    #[test]
    fn must_fire_at_last_fitting_tick() {
        let mut b = fresh();
        // three left: 17:00, 19:00 and 21:00 is the only schedule that still fits
        assert!(!b.must_fire(Timestamp::at(0, 16, 55)));
        assert!(b.must_fire(Timestamp::at(0, 17, 0)));
        b.record_delivery(Timestamp::at(0, 17, 0)).unwrap();
        assert!(!b.must_fire(Timestamp::at(0, 18, 55)));
        assert!(b.must_fire(Timestamp::at(0, 19, 0)));
        b.record_delivery(Timestamp::at(0, 19, 0)).unwrap();
        b.record_delivery(Timestamp::at(0, 21, 0)).unwrap();
        assert!(!b.must_fire(Timestamp::at(0, 21, 0)));
        // with one left the last tick of the window is the deadline
        let mut b = fresh();
        b.record_delivery(Timestamp::at(TUESDAY, 9, 0)).unwrap();
        b.record_delivery(Timestamp::at(TUESDAY, 11, 0)).unwrap();
        assert!(!b.must_fire(Timestamp::at(TUESDAY, 20, 55)));
        assert!(b.must_fire(Timestamp::at(TUESDAY, 21, 0)));
    }

    #[test]
    fn feature_examples() {
        let b = fresh();
        let x = features(Timestamp::at(0, 8, 0), &b);
        assert_eq!(x.len(), FEATURE_DIM);
        assert_eq!(x[2..7], [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(x[7], 1.0);
        assert_eq!(x[8], 1.0);
        assert_eq!(x[9], 1.0);
        assert_eq!(features(Timestamp::at(0, 21, 0), &b)[9], 0.0);
        let eight = features(Timestamp::at(2, 8, 0), &b);
        let twenty = features(Timestamp::at(2, 20, 0), &b);
        assert_ne!(eight[..2], twenty[..2]);
        assert_eq!(eight[..2], x[..2]);
        // weekend: no weekday bit set
        assert!(features(Timestamp::at(SATURDAY, 9, 0), &b)[2..7].iter().all(|v| *v == 0.0));

        let mut b = fresh();
        b.record_delivery(Timestamp::at(0, 9, 0)).unwrap();
        let x = features(Timestamp::at(0, 12, 15), &b);
        assert!((x[7] - 195.0 / 780.0).abs() < 1e-15);
        assert!((x[8] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn score_examples() {
        let m = TimingModel::zeros(3);
        assert_eq!(m.score(&[1.0, -2.0, 0.5]).unwrap(), 0.5);
        let mut big = m.clone();
        big.bias = 50.0;
        assert!(big.score(&[0.0; 3]).unwrap() > 1.0 - 1e-15);
        assert!(matches!(
            m.score(&[1.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 1 })
        ));
        // w.x + b = 0.4 - 0.3 + 0.25 - 0.1 = 0.25; 1/(1+e^-0.25)
        let g = TimingModel {
            weights: vec![0.4, -0.3, 0.5],
            bias: -0.1,
            ..TimingModel::zeros(3)
        };
        let p = g.score(&[1.0, 1.0, 0.5]).unwrap();
        assert!((p - 0.562_176_500_885_798_7).abs() < 1e-15);
    }

    fn toy() -> Vec<Example> {
        (0..40)
            .map(|i| {
                let x = -1.0 + 2.0 * i as f64 / 39.0;
                Example {
                    features: vec![x],
                    label: if x > 0.0 { 1.0 } else { 0.0 },
                    group: (i / 4) as u64,
                }
            })
            .collect()
    }

    #[test]
    fn separable_toy_fits() {
        let m = TimingModel {
            budget_penalty: 0.0,
            ..TimingModel::zeros(1)
        };
        let r = m
            .train(
                &toy(),
                &TrainParams {
                    epochs: 500,
                    step: 5.0,
                    ..TrainParams::default()
                },
            )
            .unwrap();
        assert!(*r.losses.last().unwrap() < 0.05);
        for w in r.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn large_penalty_pins_daily_triggers() {
        // six positive prompts per day, budget three
        let data: Vec<Example> = (0..60)
            .map(|i| Example {
                features: vec![(i % 6) as f64 / 6.0, 1.0],
                label: 1.0,
                group: (i / 6) as u64,
            })
            .collect();
        let m = TimingModel {
            budget_penalty: 50.0,
            ..TimingModel::zeros(2)
        };
        let r = m
            .train(
                &data,
                &TrainParams {
                    daily_budget: 3.0,
                    epochs: 2000,
                    step: 0.01,
                },
            )
            .unwrap();
        let daily: f64 = data.iter().map(|e| r.model.score(&e.features).unwrap()).sum::<f64>() / 10.0;
        assert!((daily - 3.0).abs() < 0.5, "{daily}");
    }

    #[test]
    fn zero_epochs_and_empty_history() {
        let m = TimingModel::zeros(1);
        let r = m
            .train(&toy(), &TrainParams { epochs: 0, ..TrainParams::default() })
            .unwrap();
        assert_eq!(r.model, m);
        assert!(m.train(&[], &TrainParams::default()).is_err());
    }

    #[test]
    fn decide_respects_eligibility_and_grid() {
        let m = TimingModel {
            bias: 2.2,
            ..TimingModel::default()
        };
        let b = fresh();
        assert!(m.decide(&b, Timestamp::at(TUESDAY, 10, 0)));
        assert!(!m.decide(&b, Timestamp::at(TUESDAY, 10, 3)));
        assert!(!m.decide(&b, Timestamp::at(SATURDAY, 10, 0)));
        let low = TimingModel {
            bias: -2.0,
            ..TimingModel::default()
        };
        assert!(!low.decide(&b, Timestamp::at(TUESDAY, 10, 0)));
    }

    #[test]
    fn greedy_day_never_exceeds_budget() {
        let m = TimingModel {
            bias: 5.0,
            ..TimingModel::default()
        };
        let mut b = fresh();
        let mut fired = Vec::new();
        for t in (0..MINUTES_PER_DAY).step_by(TICK_MINUTES as usize) {
            let now = Timestamp(TUESDAY * MINUTES_PER_DAY + t);
            if m.decide(&b, now) {
                b.record_delivery(now).unwrap();
                fired.push(now);
            }
        }
        assert_eq!(fired.len(), 3);
        assert_eq!(fired[0], Timestamp::at(TUESDAY, 8, 0));
        assert_eq!(fired[1], Timestamp::at(TUESDAY, 10, 0));
    }

    #[test]
    fn random_plan_respects_rules() {
        let rules = BudgetRules::default();
        let mut rng = rng_from(12);
        let mut hours = [0usize; 24];
        for _ in 0..2000 {
            let plan = random_trigger_plan(&rules, TUESDAY, 3, &mut rng).unwrap();
            assert_eq!(plan.len(), 3);
            let mut b = fresh();
            for t in &plan {
                hours[t.hour() as usize] += 1;
                b.record_delivery(*t).unwrap();
            }
        }
        assert!(hours[8..=20].iter().all(|h| *h > 0));
        assert!(random_trigger_plan(&rules, TUESDAY, 0, &mut rng).unwrap().is_empty());
    }
}

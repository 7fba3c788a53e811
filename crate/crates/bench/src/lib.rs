//! Inputs shared by the benchmarks, built deterministically without an RNG
//! dependency.

use pcar_core::scheduler::{features, BudgetRules, BudgetState, Example};
use pcar_core::seed::hash64;
use pcar_core::study::StudyConfig;
use pcar_core::time::Timestamp;

/// Uniform in [0, 1) from a hashed counter.
pub fn unit(seed: u64, i: u64) -> f64 {
    (hash64(seed, i) >> 11) as f64 / (1u64 << 53) as f64
}

/// Labelled prompts at three fixed times per weekday for `participants`
/// participants over two weeks, labels drawn from a smooth hourly curve.
pub fn timing_history(participants: u32) -> Vec<Example> {
    let rules = BudgetRules::default();
    let mut out = Vec::new();
    for pid in 0..participants {
        let mut budget = BudgetState::new(rules.clone());
        for day in (0..14).filter(|d| d % 7 < 5) {
            for hour in [9, 13, 18] {
                let now = Timestamp::at(day, hour, 0);
                let x = features(now, &budget);
                budget.record_delivery(now).expect("fixed schedule respects the rules");
                let p = 0.3 + 0.04 * (hour - 8) as f64;
                let y = unit(pid as u64, (day * 24 + hour) as u64) < p;
                out.push(Example {
                    features: x,
                    label: if y { 1.0 } else { 0.0 },
                    group: ((pid as u64) << 32) | day as u64,
                });
            }
        }
    }
    out
}

/// A one-week-per-phase study small enough to run inside a benchmark loop.
pub fn small_study(seed: u64, participants: usize) -> StudyConfig {
    StudyConfig {
        seed,
        n_participants: participants,
        weeks_per_phase: 1,
        ..StudyConfig::default()
    }
}

pub fn rewards(n: usize, seed: u64) -> Vec<f64> {
    (0..n as u64).map(|i| 4.0 * unit(seed, i) - 1.0).collect()
}

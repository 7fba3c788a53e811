//! End-to-end acceptance checks. Runs as a plain binary so each criterion
//! prints one PASS/FAIL line; exits nonzero if any of them fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use pcar_core::agent::{ghost_audit, ghost_audit_with, ContextBucket, Period, Transition};
use pcar_core::lsd::clipped_tau_index;
use pcar_core::scheduler::BudgetRules;
use pcar_core::seed::rng_from;
use pcar_core::stats::{mean, pss_trend, pearson, sign_test, welch_t};
use pcar_core::study::{
    compare_timing, oracle_check, participant_means, run_study, Group, Metric, OracleCheck, StudyConfig,
    StudyLog, TimingMode,
};
use pcar_core::{AgentBundle, AgentConfig, ArmId, AttributeSchema, LsdState};
use rand::Rng;
use rayon::prelude::*;
use serde_json::Value;

const SEEDS: u64 = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    }
}

fn lsd_invariants() -> Outcome {
    let t0 = Instant::now();
    let mut rng = rng_from(1);
    let mut violations = 0usize;
    let mut steps = 0usize;
    while steps < 10_000 {
        let k = rng.random_range(1..=8);
        let tau_max = rng.random_range(1..=6u32);
        let mut s = LsdState::initial(k, tau_max).unwrap();
        for _ in 0..rng.random_range(1..=50) {
            s = s.advance(ArmId(rng.random_range(0..k))).unwrap();
            steps += 1;
            let negative = s.taus().iter().filter(|&&t| t < 0).count();
            let bounded = s.taus().iter().all(|&t| t != 0 && t.unsigned_abs() <= tau_max);
            if negative != 1 || !bounded {
                violations += 1;
            }
        }
    }
    let time = within(t0.elapsed(), Duration::from_secs(5));
    outcome(
        violations == 0 && time.is_ok(),
        format!("{steps} steps, {violations} violations, {:.2?}{}", t0.elapsed(), note(&time)),
    )
}

fn ghost_factorization() -> Outcome {
    let t0 = Instant::now();
    let mut b = AgentBundle::new(AttributeSchema::intervention_default(), AgentConfig::default(), 5).unwrap();
    let mut rng = rng_from(2);
    for i in 0..1000 {
        let ctx = ContextBucket::new(Period::ALL[rng.random_range(0..3)], rng.random_range(0..2));
        let a = b.select_action(&ctx).unwrap();
        let next = b.select_following(&a, &ctx).unwrap();
        b.update(&Transition {
            ctx,
            action: a,
            reward: rng.random_range(-3..=3) as f64,
            next: (i % 7 != 6).then_some((ctx, next)),
        })
        .unwrap();
        if i % 7 == 6 {
            b.end_episode();
        }
    }
    let clean = ghost_audit(&b).unwrap();
    // A lookup that leaks another value's clock into the key must be caught.
    let leaky = |b: &AgentBundle, p: usize, s: &LsdState, v: usize, c: &ContextBucket| {
        let clip = b.config().tau_clip;
        let base = b.model(p).q(
            v,
            clipped_tau_index(s.tau(ArmId(v))?, clip),
            c.index(b.config().trait_buckets),
        );
        Ok(base + 1e-3 * s.tau(ArmId((v + 1) % s.arms()))? as f64)
    };
    let corrupted = ghost_audit_with(&b, &leaky).unwrap();
    let time = within(t0.elapsed(), Duration::from_secs(5));
    outcome(
        clean.passed() && !corrupted.passed() && time.is_ok(),
        format!(
            "audit checked {} lookups with {} counterexamples; corrupted lookup gave {}, {:.2?}{}",
            clean.checked,
            clean.counterexamples.len(),
            corrupted.counterexamples.len(),
            t0.elapsed(),
            note(&time)
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let t0 = Instant::now();
    let r = oracle_check(&OracleCheck::default()).unwrap();
    let time = within(t0.elapsed(), Duration::from_secs(60));
    outcome(
        r.pass && time.is_ok(),
        format!(
            "optimum {:.2}, {}/{} seeds at >= 95% (need {}), {:.2?}{}",
            r.optimal_total,
            r.passing_seeds,
            r.outcomes.len(),
            r.needed_seeds,
            t0.elapsed(),
            note(&time)
        ),
    )
}

fn run_seeds(base: &StudyConfig) -> Vec<StudyLog> {
    (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            run_study(&StudyConfig {
                seed,
                ..base.clone()
            })
            .unwrap()
        })
        .collect()
}

fn last_week(log: &StudyLog) -> i64 {
    2 * log.metadata.weeks_per_phase as i64 - 1
}

fn ordering(logs: &[StudyLog]) -> Outcome {
    let (mut pcar, mut random, mut control) = (vec![], vec![], vec![]);
    for log in logs {
        let last = last_week(log);
        pcar.extend(participant_means(log, Group::Pcar, last, Metric::Reward));
        random.extend(participant_means(log, Group::Random, last, Metric::Reward));
        control.extend(participant_means(log, Group::Control, last - log.metadata.weeks_per_phase as i64, Metric::Reward));
    }
    let (p, r, c) = (mean(&pcar).unwrap(), mean(&random).unwrap(), mean(&control).unwrap());
    let w = welch_t(&pcar, &random).unwrap();
    outcome(
        p > r && r > c && w.t > 0.0 && w.p < 0.05,
        format!("final-week reward pcar {p:.3} > random {r:.3} > control {c:.3}; welch t {:.2} p {:.2e}", w.t, w.p),
    )
}

fn acceptance_change(log: &StudyLog, group: Group) -> Option<f64> {
    let last = last_week(log);
    let end = mean(&participant_means(log, group, last, Metric::Acceptance)).ok()?;
    let start = mean(&participant_means(log, group, last - 1, Metric::Acceptance)).ok()?;
    Some(end - start)
}

fn engagement_trend(logs: &[StudyLog]) -> Outcome {
    let successes = logs
        .iter()
        .filter(|log| match (acceptance_change(log, Group::Pcar), acceptance_change(log, Group::Random)) {
            (Some(p), Some(r)) => p >= r,
            _ => false,
        })
        .count() as u64;
    let trials = logs.len() as u64;
    let p = sign_test(successes, trials).unwrap();
    outcome(
        successes * 10 >= trials * 7 && p < 0.05,
        format!("pcar acceptance change >= random on {successes}/{trials} seeds, sign test p {p:.4}"),
    )
}

fn budget_safety(logs: &[StudyLog], rules: &BudgetRules) -> Outcome {
    let violations: usize = logs.iter().map(|l| l.violations(rules).len()).sum();
    let prompts: usize = logs.iter().map(|l| l.records.len()).sum();
    outcome(
        violations == 0 && *rules == BudgetRules::default(),
        format!("{prompts} prompts over {} studies, {violations} violations", logs.len()),
    )
}

fn calibration() -> Outcome {
    let mut cfg = StudyConfig {
        weeks_per_phase: 1,
        ..StudyConfig::default()
    };
    cfg.timing.mode = TimingMode::Random;
    let logs = run_seeds(&cfg);
    let rate = |group: Group| {
        let hits: Vec<f64> = logs
            .iter()
            .flat_map(|l| l.records.iter().filter(move |r| r.group == group && r.phase == 1))
            .map(|r| r.accepted as u8 as f64)
            .collect();
        mean(&hits).unwrap()
    };
    let (intervention, control) = (rate(Group::Random), rate(Group::Control));
    outcome(
        (intervention - 0.50).abs() <= 0.05 && (control - 0.77).abs() <= 0.05,
        format!("two-week runs: intervention acceptance {intervention:.3} (0.50), control prompts {control:.3} (0.77)"),
    )
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn rel_close(got: f64, want: f64) -> bool {
    (got - want).abs() <= 1e-9 * want.abs().max(1e-300)
}

fn stats_correctness() -> Outcome {
    let g: Value = serde_json::from_str(include_str!("golden/stats.json")).unwrap();
    let mut bad = Vec::new();
    for name in ["welch_small", "welch_unequal", "welch_wide", "pooled_shift"] {
        let f = &g[name];
        let r = welch_t(&floats(&f["x"]), &floats(&f["y"])).unwrap();
        for (key, got) in [("t", r.t), ("df", r.df), ("p", r.p)] {
            if let Some(want) = f[key].as_f64() {
                if !rel_close(got, want) {
                    bad.push(format!("{name}.{key}"));
                }
            }
        }
    }
    let f = &g["pearson"];
    if !rel_close(pearson(&floats(&f["x"]), &floats(&f["y"])).unwrap(), f["r"].as_f64().unwrap()) {
        bad.push("pearson".into());
    }
    let f = &g["pss"];
    if !rel_close(pss_trend(&floats(&f["scores"])).unwrap(), f["slope"].as_f64().unwrap()) {
        bad.push("pss fixture".into());
    }
    let slope = pss_trend(&[18.3, 17.0, 16.0]).unwrap();
    if (slope + 1.15).abs() > 1e-12 {
        bad.push("pss endpoints".into());
    }
    outcome(
        bad.is_empty(),
        format!("fixtures within 1e-9, stress slope {slope}; mismatches: {bad:?}"),
    )
}

fn scheduler_learning() -> Outcome {
    let t0 = Instant::now();
    let cfg = StudyConfig::default();
    let runs: Vec<_> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| compare_timing(&cfg.cohort, &cfg.budget, &cfg.timing, 28, 2, 2, seed).unwrap())
        .collect();
    let learned: Vec<f64> = runs.iter().map(|r| r.learned_acceptance).collect();
    let random: Vec<f64> = runs.iter().map(|r| r.random_acceptance).collect();
    let w = welch_t(&learned, &random).unwrap();
    let one_sided = if w.t > 0.0 { w.p / 2.0 } else { 1.0 - w.p / 2.0 };
    let monotone = runs
        .iter()
        .all(|r| r.losses.windows(2).all(|e| e[1] <= e[0] + 1e-12));
    let time = within(t0.elapsed(), Duration::from_secs(60));
    outcome(
        one_sided < 0.05 && monotone && time.is_ok(),
        format!(
            "learned {:.3} vs random {:.3} acceptance, one-sided welch p {one_sided:.2e}, losses non-increasing: {monotone}, {:.2?}{}",
            mean(&learned).unwrap(),
            mean(&random).unwrap(),
            t0.elapsed(),
            note(&time)
        ),
    )
}

fn determinism() -> Outcome {
    let cfg = StudyConfig {
        seed: 77,
        ..StudyConfig::default()
    };
    let a = run_study(&cfg).unwrap().hash().unwrap();
    let b = run_study(&cfg).unwrap().hash().unwrap();
    outcome(a == b, format!("log hashes {} and {}", &a[..16], &b[..16]))
}

fn note(time: &Result<(), String>) -> String {
    match time {
        Ok(()) => String::new(),
        Err(e) => format!(" ({e})"),
    }
}

fn report(n: usize, o: &Outcome) -> bool {
    println!("criterion {n:>2} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    o.pass
}

fn main() -> ExitCode {
    let mut ok = true;
    ok &= report(1, &lsd_invariants());
    ok &= report(2, &ghost_factorization());
    ok &= report(3, &oracle_equivalence());

    let t0 = Instant::now();
    let base = StudyConfig::default();
    let logs = run_seeds(&base);
    let study_time = within(t0.elapsed(), Duration::from_secs(300));
    let mut four = ordering(&logs);
    four.detail += &format!(", {SEEDS} studies in {:.2?}{}", t0.elapsed(), note(&study_time));
    four.pass &= study_time.is_ok();
    ok &= report(4, &four);
    ok &= report(5, &engagement_trend(&logs));
    ok &= report(6, &budget_safety(&logs, &base.budget));
    ok &= report(7, &calibration());
    ok &= report(8, &stats_correctness());
    ok &= report(9, &scheduler_learning());
    ok &= report(10, &determinism());

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

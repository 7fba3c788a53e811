use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{plan_oracle, train_on_instance, AgentConfig};
use crate::error::{Error, Result};
use crate::lsd::ArmId;

/// Reward of a synthetic LSD instance: `rested` for an arm with a positive
/// clock, `fatigued` otherwise, plus `arm_step` per arm index so the optimum
/// is unique up to rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceReward {
    pub rested: f64,
    pub fatigued: f64,
    pub arm_step: f64,
}

impl Default for InstanceReward {
    fn default() -> Self {
        InstanceReward {
            rested: 1.0,
            fatigued: 0.2,
            arm_step: 0.1,
        }
    }
}

impl InstanceReward {
    pub fn eval(&self, arm: ArmId, tau: i32) -> f64 {
        (if tau > 0 { self.rested } else { self.fatigued }) + self.arm_step * arm.0 as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub arms: usize,
    pub tau_max: u32,
    pub horizon: usize,
    pub seeds: u64,
    pub episodes: usize,
    pub reward: InstanceReward,
    /// Fraction of the optimal total a seed must reach.
    pub target: f64,
    /// Fraction of seeds that must reach `target`.
    pub required: f64,
}

impl Default for OracleCheck {
    fn default() -> Self {
        OracleCheck {
            arms: 2,
            tau_max: 2,
            horizon: 10,
            seeds: 20,
            episodes: 5000,
            reward: InstanceReward::default(),
            target: 0.95,
            required: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub total: f64,
    pub fraction: f64,
    pub sequence: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub optimal_total: f64,
    pub optimal_sequence: Vec<usize>,
    pub outcomes: Vec<SeedOutcome>,
    pub passing_seeds: u64,
    pub needed_seeds: u64,
    pub pass: bool,
}

/// Plans the instance exhaustively, trains PCAR on it once per seed and
/// compares greedy rollouts with the optimum. Refuses instances beyond the
/// planner's enumeration guard before training anything.
pub fn oracle_check(check: &OracleCheck) -> Result<OracleReport> {
    if check.seeds == 0 {
        return Err(Error::InvalidParameter("seeds must be >= 1".into()));
    }
    let reward = check.reward;
    let plan = plan_oracle(|a, t| reward.eval(a, t), check.arms, check.tau_max, check.horizon)?;
    let agent = AgentConfig {
        epsilon_start: 0.2,
        epsilon_end: 0.0,
        ..AgentConfig::default()
    };
    let outcomes = (0..check.seeds)
        .into_par_iter()
        .map(|seed| {
            let run = train_on_instance(
                |a, t| reward.eval(a, t),
                check.arms,
                check.tau_max,
                check.horizon,
                check.episodes,
                agent.clone(),
                seed,
            )?;
            let fraction = if plan.total == 0.0 {
                if run.greedy_total >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                run.greedy_total / plan.total
            };
            Ok(SeedOutcome {
                seed,
                total: run.greedy_total,
                fraction,
                sequence: run.greedy_sequence,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let passing_seeds = outcomes.iter().filter(|o| o.fraction >= check.target - 1e-12).count() as u64;
    let needed_seeds = (check.required * check.seeds as f64).ceil() as u64;
    Ok(OracleReport {
        optimal_total: plan.total,
        optimal_sequence: plan.sequence,
        outcomes,
        passing_seeds,
        needed_seeds,
        pass: passing_seeds >= needed_seeds,
    })
}

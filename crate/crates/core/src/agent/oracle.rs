//! Exhaustive planner for small LSD instances, and a PCAR training loop on
//! the same instances. The planner is a test oracle, not a policy.

use serde::{Deserialize, Serialize};

use super::bundle::{AgentBundle, AgentConfig, Transition};
use super::context::{ContextBucket, Period};
use super::schema::{AttributeSchema, AttributeVector};
use crate::error::{Error, Result};
use crate::lsd::{ArmId, LsdState};

/// Upper bound on `arms^horizon` for [`plan_oracle`].
pub const ORACLE_GUARD: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePlan {
    pub sequence: Vec<usize>,
    pub total: f64,
}

fn guard(arms: usize, horizon: usize) -> Result<()> {
    let exceeded = || Error::GuardExceeded {
        arms,
        horizon,
        limit: ORACLE_GUARD,
    };
    let h = u32::try_from(horizon).map_err(|_| exceeded())?;
    match (arms as u64).checked_pow(h) {
        Some(n) if n <= ORACLE_GUARD => Ok(()),
        _ => Err(exceeded()),
    }
}

/// Enumerates every arm sequence of length `horizon` from the fully rested
/// state. Reward is taken on the reward key before each play. Among optimal
/// sequences the lexicographically smallest is returned.
pub fn plan_oracle<F>(reward: F, arms: usize, tau_max: u32, horizon: usize) -> Result<OraclePlan>
where
    F: Fn(ArmId, i32) -> f64,
{
    guard(arms, horizon)?;
    let start = LsdState::initial(arms, tau_max)?;
    let mut best = OraclePlan {
        sequence: Vec::new(),
        total: f64::NEG_INFINITY,
    };
    let mut path = Vec::with_capacity(horizon);
    search(&reward, &start, horizon, 0.0, &mut path, &mut best)?;
    Ok(best)
}

fn search<F>(
    reward: &F,
    state: &LsdState,
    remaining: usize,
    acc: f64,
    path: &mut Vec<usize>,
    best: &mut OraclePlan,
) -> Result<()>
where
    F: Fn(ArmId, i32) -> f64,
{
    if remaining == 0 {
        // depth-first in lexicographic order, so only a strict improvement
        // replaces the incumbent
        if acc > best.total + 1e-12 {
            best.total = acc;
            best.sequence = path.clone();
        }
        return Ok(());
    }
    for a in 0..state.arms() {
        let arm = ArmId(a);
        let (_, tau) = state.reward_key(arm)?;
        let r = reward(arm, tau);
        let next = state.advance(arm)?;
        path.push(a);
        search(reward, &next, remaining - 1, acc + r, path, best)?;
        path.pop();
    }
    Ok(())
}

/// Total reward of playing `sequence` from the rested state.
pub fn sequence_reward<F>(reward: F, arms: usize, tau_max: u32, sequence: &[usize]) -> Result<f64>
where
    F: Fn(ArmId, i32) -> f64,
{
    let mut s = LsdState::initial(arms, tau_max)?;
    let mut total = 0.0;
    for &a in sequence {
        let (_, tau) = s.reward_key(ArmId(a))?;
        total += reward(ArmId(a), tau);
        s = s.advance(ArmId(a))?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRun {
    pub greedy_sequence: Vec<usize>,
    pub greedy_total: f64,
}

/// Trains a single-attribute bundle on an LSD instance for `episodes`
/// episodes of length `horizon`, then rolls out the greedy policy once.
/// Epsilon anneals linearly over all training rounds and value keys use the
/// full clock resolution of the instance.
pub fn train_on_instance<F>(
    reward: F,
    arms: usize,
    tau_max: u32,
    horizon: usize,
    episodes: usize,
    mut config: AgentConfig,
    seed: u64,
) -> Result<InstanceRun>
where
    F: Fn(ArmId, i32) -> f64,
{
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    config.trait_buckets = 1;
    config.tau_max = tau_max;
    config.tau_clip = tau_max;
    config.epsilon_rounds = (episodes * horizon) as u64;
    let schema = AttributeSchema::single("arm", arms)?;
    let mut bundle = AgentBundle::new(schema, config, seed)?;
    let ctx = ContextBucket::new(Period::Morning, 0);

    for _ in 0..episodes {
        bundle.reset_clocks()?;
        let mut action = bundle.select_action(&ctx)?;
        for step in 0..horizon {
            let arm = ArmId(action.0[0]);
            let r = reward(arm, bundle.lsd(0).tau(arm)?);
            let next = if step + 1 < horizon {
                Some(bundle.select_following(&action, &ctx)?)
            } else {
                None
            };
            bundle.update(&Transition {
                ctx,
                action: action.clone(),
                reward: r,
                next: next.clone().map(|n| (ctx, n)),
            })?;
            match next {
                Some(n) => action = n,
                None => break,
            }
        }
        bundle.end_episode();
    }

    bundle.reset_clocks()?;
    let mut seq = Vec::with_capacity(horizon);
    let mut total = 0.0;
    for _ in 0..horizon {
        let AttributeVector(a) = bundle.greedy_action(&ctx)?;
        let arm = ArmId(a[0]);
        total += reward(arm, bundle.lsd(0).tau(arm)?);
        let next = bundle.lsd(0).advance(arm)?;
        bundle.set_lsd(0, next)?;
        seq.push(arm.0);
    }
    Ok(InstanceRun {
        greedy_sequence: seq,
        greedy_total: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rested(_: ArmId, tau: i32) -> f64 {
        if tau > 0 {
            1.0
        } else {
            0.0
        }
    }

    #[test]
    fn single_arm_has_one_sequence() {
        let plan = plan_oracle(|_, t| t as f64, 1, 3, 5).unwrap();
        assert_eq!(plan.sequence, vec![0; 5]);
        // clocks before each play: +3, -1, -2, -3, -3
        assert_eq!(plan.total, 3.0 - 1.0 - 2.0 - 3.0 - 3.0);
    }

    #[test]
    fn alternation_keeps_both_arms_rested() {
        let plan = plan_oracle(rested, 2, 2, 4).unwrap();
        assert_eq!(plan.total, 4.0);
        assert_eq!(plan.sequence, vec![0, 1, 0, 1]);
    }

    #[test]
    fn guard_refuses_large_instances() {
        let err = plan_oracle(rested, 10, 2, 8).unwrap_err();
        assert!(matches!(err, Error::GuardExceeded { arms: 10, horizon: 8, .. }));
        assert!(guard(10, 7).is_ok());
    }

    #[test]
    fn sequence_reward_matches_plan() {
        let f = |a: ArmId, t: i32| if t > 0 { 1.0 } else { 0.2 } + 0.1 * a.0 as f64;
        let plan = plan_oracle(f, 2, 2, 6).unwrap();
        assert_eq!(sequence_reward(f, 2, 2, &plan.sequence).unwrap(), plan.total);
    }

    #[test]
    fn single_arm_training_is_trivially_optimal() {
        let f = |_: ArmId, t: i32| 0.5 * t as f64;
        let run = train_on_instance(f, 1, 3, 6, 10, AgentConfig::default(), 1).unwrap();
        let plan = plan_oracle(f, 1, 3, 6).unwrap();
        assert_eq!(run.greedy_total, plan.total);
    }
}

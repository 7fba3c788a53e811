use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::context::ContextBucket;
use super::schema::{AttributeSchema, AttributeVector};
use crate::error::{Error, Result};
use crate::lsd::{clipped_tau_index, tau_from_index, ArmId, LsdState, DEFAULT_TAU_MAX};
use crate::seed::{rng_from, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Rounds over which epsilon moves linearly from start to end.
    pub epsilon_rounds: u64,
    /// Cap of each agent's switch clocks.
    pub tau_max: u32,
    /// Clock magnitude used for value-table keys (`<= tau_max`).
    pub tau_clip: u32,
    pub trait_buckets: usize,
    /// Trajectory-level ghost propagation depth. Only 0 is supported.
    pub ghost_rollout_depth: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            alpha: 0.1,
            gamma: 0.9,
            lambda: 0.6,
            epsilon_start: 0.2,
            epsilon_end: 0.02,
            epsilon_rounds: 30,
            tau_max: DEFAULT_TAU_MAX,
            tau_clip: 1,
            trait_buckets: 2,
            ghost_rollout_depth: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name}={v} not in [0, 1]")))
            }
        };
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha={} not in (0, 1]",
                self.alpha
            )));
        }
        unit("gamma", self.gamma)?;
        unit("lambda", self.lambda)?;
        unit("epsilon_start", self.epsilon_start)?;
        unit("epsilon_end", self.epsilon_end)?;
        if self.tau_max == 0 || self.tau_clip == 0 || self.tau_clip > self.tau_max {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= tau_clip ({}) <= tau_max ({})",
                self.tau_clip, self.tau_max
            )));
        }
        if self.trait_buckets == 0 {
            return Err(Error::InvalidParameter("trait_buckets must be >= 1".into()));
        }
        if self.ghost_rollout_depth != 0 {
            return Err(Error::Unsupported(
                "ghost_rollout_depth > 0 (trajectory-level ghost propagation)".into(),
            ));
        }
        Ok(())
    }

    pub fn buckets(&self) -> usize {
        3 * self.trait_buckets
    }

    pub fn epsilon(&self, round: u64) -> f64 {
        let frac = if self.epsilon_rounds == 0 {
            1.0
        } else {
            (round as f64 / self.epsilon_rounds as f64).min(1.0)
        };
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Action values and replacing eligibility traces of one agent, laid out as
/// `[value][clipped tau][context bucket]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QModel {
    values: usize,
    taus: usize,
    buckets: usize,
    q: Vec<f64>,
    e: Vec<f64>,
}

impl QModel {
    fn new(values: usize, taus: usize, buckets: usize) -> Self {
        let n = values * taus * buckets;
        QModel {
            values,
            taus,
            buckets,
            q: vec![0.0; n],
            e: vec![0.0; n],
        }
    }

    fn offset(&self, value: usize, tau_index: usize, bucket: usize) -> usize {
        (value * self.taus + tau_index) * self.buckets + bucket
    }

    pub fn q(&self, value: usize, tau_index: usize, bucket: usize) -> f64 {
        self.q[self.offset(value, tau_index, bucket)]
    }

    pub fn trace(&self, value: usize, tau_index: usize, bucket: usize) -> f64 {
        self.e[self.offset(value, tau_index, bucket)]
    }

    pub fn set_q(&mut self, value: usize, tau_index: usize, bucket: usize, q: f64) {
        let i = self.offset(value, tau_index, bucket);
        self.q[i] = q;
    }

    pub fn q_table(&self) -> &[f64] {
        &self.q
    }

    pub fn traces(&self) -> &[f64] {
        &self.e
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.values, self.taus, self.buckets)
    }
}

/// A SARSA transition. `next` is `None` at the end of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub ctx: ContextBucket,
    pub action: AttributeVector,
    pub reward: f64,
    pub next: Option<(ContextBucket, AttributeVector)>,
}

#[derive(Debug, Clone)]
struct Agent {
    lsd: LsdState,
    model: QModel,
}

/// One independent learner per attribute, all fed the same scalar reward.
///
/// Values are looked up by `(value, clipped tau of that value, context)`
/// only, so a single write covers every global state that shares the
/// reward key: ghost replication holds by construction.
#[derive(Debug, Clone)]
pub struct AgentBundle {
    schema: AttributeSchema,
    config: AgentConfig,
    agents: Vec<Agent>,
    rounds: u64,
    seed: u64,
    rng: SimRng,
}

impl AgentBundle {
    pub fn new(schema: AttributeSchema, config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let taus = 2 * config.tau_clip as usize;
        let buckets = config.buckets();
        let agents = schema
            .sizes()
            .into_iter()
            .map(|k| {
                Ok(Agent {
                    lsd: LsdState::initial(k, config.tau_max)?,
                    model: QModel::new(k, taus, buckets),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AgentBundle {
            schema,
            config,
            agents,
            rounds: 0,
            seed,
            rng: rng_from(seed),
        })
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon(self.rounds)
    }

    pub fn lsd(&self, agent: usize) -> &LsdState {
        &self.agents[agent].lsd
    }

    pub fn model(&self, agent: usize) -> &QModel {
        &self.agents[agent].model
    }

    pub fn model_mut(&mut self, agent: usize) -> &mut QModel {
        &mut self.agents[agent].model
    }

    /// Replaces an agent's clocks, e.g. to mirror a known delivery history.
    pub fn set_lsd(&mut self, agent: usize, lsd: LsdState) -> Result<()> {
        let a = &mut self.agents[agent];
        if lsd.arms() != a.lsd.arms() || lsd.tau_max() != self.config.tau_max {
            return Err(Error::InvalidParameter("lsd state shape mismatch".into()));
        }
        a.lsd = lsd;
        Ok(())
    }

    fn bucket(&self, ctx: &ContextBucket) -> Result<usize> {
        if ctx.trait_bucket as usize >= self.config.trait_buckets {
            return Err(Error::InvalidParameter(format!(
                "trait bucket {} >= {}",
                ctx.trait_bucket, self.config.trait_buckets
            )));
        }
        Ok(ctx.index(self.config.trait_buckets))
    }

    /// The lookup every selection goes through: the value of playing
    /// `value` for `agent` when the agent's clocks are `state`.
    pub fn action_value(
        &self,
        agent: usize,
        state: &LsdState,
        value: usize,
        ctx: &ContextBucket,
    ) -> Result<f64> {
        let tau = state.tau(ArmId(value))?;
        let b = self.bucket(ctx)?;
        Ok(self.agents[agent]
            .model
            .q(value, clipped_tau_index(tau, self.config.tau_clip), b))
    }

    fn greedy(&self, agent: usize, state: &LsdState, ctx: &ContextBucket) -> Result<usize> {
        let mut best = 0;
        let mut best_q = f64::NEG_INFINITY;
        for v in 0..state.arms() {
            let q = self.action_value(agent, state, v, ctx)?;
            // strict: ties keep the lowest index
            if q > best_q {
                best = v;
                best_q = q;
            }
        }
        Ok(best)
    }

    fn select_from(&mut self, states: &[LsdState], ctx: &ContextBucket) -> Result<AttributeVector> {
        self.bucket(ctx)?;
        let eps = self.epsilon();
        let mut out = Vec::with_capacity(states.len());
        for (p, state) in states.iter().enumerate() {
            let explore = self.rng.random::<f64>() < eps;
            let v = if explore {
                self.rng.random_range(0..state.arms())
            } else {
                self.greedy(p, state, ctx)?
            };
            out.push(v);
        }
        Ok(AttributeVector(out))
    }

    /// Epsilon-greedy choice per agent over its current clocks.
    pub fn select_action(&mut self, ctx: &ContextBucket) -> Result<AttributeVector> {
        let states: Vec<LsdState> = self.agents.iter().map(|a| a.lsd.clone()).collect();
        self.select_from(&states, ctx)
    }

    /// Chooses the action that would follow `action`, i.e. from the clocks
    /// after `action` is played, without committing the transition.
    pub fn select_following(
        &mut self,
        action: &AttributeVector,
        ctx: &ContextBucket,
    ) -> Result<AttributeVector> {
        self.schema.validate(action)?;
        let states = self
            .agents
            .iter()
            .zip(action.values())
            .map(|(a, &v)| a.lsd.advance(ArmId(v)))
            .collect::<Result<Vec<_>>>()?;
        self.select_from(&states, ctx)
    }

    /// Greedy choice with no exploration and no rng use.
    pub fn greedy_action(&self, ctx: &ContextBucket) -> Result<AttributeVector> {
        self.agents
            .iter()
            .enumerate()
            .map(|(p, a)| self.greedy(p, &a.lsd, ctx))
            .collect::<Result<Vec<_>>>()
            .map(AttributeVector)
    }

    /// One SARSA(lambda) step with replacing traces for every agent, then
    /// each agent's clocks advance on the value it played.
    pub fn update(&mut self, t: &Transition) -> Result<()> {
        if !t.reward.is_finite() {
            return Err(Error::NonFiniteReward(t.reward));
        }
        self.schema.validate(&t.action)?;
        let b = self.bucket(&t.ctx)?;
        let next = match &t.next {
            Some((ctx, a)) => {
                self.schema.validate(a)?;
                Some((self.bucket(ctx)?, a))
            }
            None => None,
        };
        let clip = self.config.tau_clip;
        let (alpha, gamma, lambda) = (self.config.alpha, self.config.gamma, self.config.lambda);
        for (p, agent) in self.agents.iter_mut().enumerate() {
            let v = t.action.0[p];
            let key = clipped_tau_index(agent.lsd.tau(ArmId(v))?, clip);
            let after = agent.lsd.advance(ArmId(v))?;
            let bootstrap = match next {
                Some((nb, na)) => {
                    let nv = na.0[p];
                    let nk = clipped_tau_index(after.tau(ArmId(nv))?, clip);
                    gamma * agent.model.q(nv, nk, nb)
                }
                None => 0.0,
            };
            let m = &mut agent.model;
            let i = m.offset(v, key, b);
            let delta = t.reward + bootstrap - m.q[i];
            m.e[i] = 1.0;
            let decay = gamma * lambda;
            for (q, e) in m.q.iter_mut().zip(m.e.iter_mut()) {
                if *e != 0.0 {
                    *q += alpha * delta * *e;
                    *e *= decay;
                }
            }
            agent.lsd = after;
        }
        self.rounds += 1;
        Ok(())
    }

    /// Clears eligibility traces at an episode boundary.
    pub fn end_episode(&mut self) {
        for a in &mut self.agents {
            a.model.e.iter_mut().for_each(|e| *e = 0.0);
        }
    }

    /// Resets clocks to fully rested without touching the value tables.
    pub fn reset_clocks(&mut self) -> Result<()> {
        for a in &mut self.agents {
            a.lsd = LsdState::initial(a.lsd.arms(), self.config.tau_max)?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> QSnapshot {
        let clip = self.config.tau_clip;
        let tb = self.config.trait_buckets;
        let mut agents = BTreeMap::new();
        for (p, attr) in self.schema.attributes().iter().enumerate() {
            let m = &self.agents[p].model;
            let mut by_value = BTreeMap::new();
            for (v, name) in attr.values.iter().enumerate() {
                let mut by_tau = BTreeMap::new();
                for ti in 0..m.taus {
                    let mut by_bucket = BTreeMap::new();
                    for bi in 0..m.buckets {
                        by_bucket.insert(
                            ContextBucket::from_index(bi, tb).to_string(),
                            m.q(v, ti, bi),
                        );
                    }
                    by_tau.insert(format!("{:+}", tau_from_index(ti, clip)), by_bucket);
                }
                by_value.insert(name.clone(), by_tau);
            }
            agents.insert(attr.name.clone(), by_value);
        }
        QSnapshot {
            schema_version: QSnapshot::VERSION,
            tau_clip: clip,
            trait_buckets: tb,
            rounds: self.rounds,
            agents,
        }
    }

    /// Loads value tables from a snapshot; traces are cleared.
    pub fn restore(&mut self, snap: &QSnapshot) -> Result<()> {
        if snap.schema_version != QSnapshot::VERSION
            || snap.tau_clip != self.config.tau_clip
            || snap.trait_buckets != self.config.trait_buckets
        {
            return Err(Error::InvalidParameter(
                "snapshot does not match agent configuration".into(),
            ));
        }
        let clip = self.config.tau_clip;
        let tb = self.config.trait_buckets;
        let schema = self.schema.clone();
        for (p, attr) in schema.attributes().iter().enumerate() {
            let by_value = snap.agents.get(&attr.name).ok_or_else(|| {
                Error::InvalidParameter(format!("snapshot lacks agent `{}`", attr.name))
            })?;
            let m = &mut self.agents[p].model;
            for (v, name) in attr.values.iter().enumerate() {
                for ti in 0..m.taus {
                    for bi in 0..m.buckets {
                        let q = by_value
                            .get(name)
                            .and_then(|t| t.get(&format!("{:+}", tau_from_index(ti, clip))))
                            .and_then(|b| b.get(&ContextBucket::from_index(bi, tb).to_string()))
                            .copied()
                            .ok_or_else(|| {
                                Error::InvalidParameter(format!(
                                    "snapshot lacks entry for {}={name}",
                                    attr.name
                                ))
                            })?;
                        if !q.is_finite() {
                            return Err(Error::InvalidParameter("non-finite Q in snapshot".into()));
                        }
                        m.set_q(v, ti, bi, q);
                    }
                }
            }
        }
        self.end_episode();
        self.rounds = snap.rounds;
        Ok(())
    }
}

/// JSON view of the value tables: agent → value → tau → bucket → Q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QSnapshot {
    pub schema_version: u32,
    pub tau_clip: u32,
    pub trait_buckets: usize,
    pub rounds: u64,
    pub agents: BTreeMap<String, SnapshotTable>,
}

/// Q values of one agent by value name, then clock, then context bucket.
pub type SnapshotTable = BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>;

impl QSnapshot {
    pub const VERSION: u32 = 1;
}

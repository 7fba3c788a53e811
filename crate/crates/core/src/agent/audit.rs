//! Ghost-state audit: action values must be a pure function of the reward
//! key `(value, tau of that value)` and the context bucket.

use serde::Serialize;

use super::bundle::AgentBundle;
use super::context::ContextBucket;
use crate::error::Result;
use crate::lsd::LsdState;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GhostCounterexample {
    pub agent: usize,
    pub value: usize,
    pub tau: i32,
    pub bucket: String,
    pub state_a: Vec<i32>,
    pub state_b: Vec<i32>,
    pub q_a: f64,
    pub q_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GhostReport {
    pub checked: usize,
    pub counterexamples: Vec<GhostCounterexample>,
}

impl GhostReport {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

/// Signature of a value lookup under audit.
pub type Lookup<'a> = dyn Fn(&AgentBundle, usize, &LsdState, usize, &ContextBucket) -> Result<f64> + 'a;

/// Audits the bundle's own lookup.
pub fn ghost_audit(bundle: &AgentBundle) -> Result<GhostReport> {
    ghost_audit_with(bundle, &|b, p, s, v, c| b.action_value(p, s, v, c))
}

/// For every agent, value, clock and bucket, builds global states that agree
/// on the audited value's clock but differ elsewhere, and checks that the
/// lookup returns the identical number for all of them.
pub fn ghost_audit_with(bundle: &AgentBundle, lookup: &Lookup<'_>) -> Result<GhostReport> {
    let cfg = bundle.config();
    let cap = cfg.tau_max as i32;
    let taus: Vec<i32> = (-cap..=cap).filter(|t| *t != 0).collect();
    let mut report = GhostReport {
        checked: 0,
        counterexamples: Vec::new(),
    };
    for (p, k) in bundle.schema().sizes().into_iter().enumerate() {
        for v in 0..k {
            for &tau in &taus {
                let variants = ghost_variants(k, v, tau, cap)?;
                for bi in 0..cfg.buckets() {
                    let ctx = ContextBucket::from_index(bi, cfg.trait_buckets);
                    let reference = lookup(bundle, p, &variants[0], v, &ctx)?;
                    for other in &variants[1..] {
                        let q = lookup(bundle, p, other, v, &ctx)?;
                        report.checked += 1;
                        if q.to_bits() != reference.to_bits() {
                            report.counterexamples.push(GhostCounterexample {
                                agent: p,
                                value: v,
                                tau,
                                bucket: ctx.to_string(),
                                state_a: variants[0].taus().to_vec(),
                                state_b: other.taus().to_vec(),
                                q_a: reference,
                                q_b: q,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Reachable-looking global states with `taus[value] == tau`: when `tau` is
/// negative every other arm rests, otherwise one other arm (if any) holds
/// the negative clock. Other clocks sweep the admissible range.
fn ghost_variants(k: usize, value: usize, tau: i32, cap: i32) -> Result<Vec<LsdState>> {
    let mut out = Vec::new();
    for fill in 1..=cap {
        for neg in 0..k {
            let mut t = vec![0; k];
            for (i, slot) in t.iter_mut().enumerate() {
                *slot = if i == value {
                    tau
                } else if tau > 0 && i == neg {
                    -fill
                } else {
                    ((fill + i as i32) % cap) + 1
                };
            }
            if tau > 0 && neg == value && k > 1 {
                continue;
            }
            out.push(LsdState::from_taus(t, cap as u32)?);
            if tau < 0 {
                break;
            }
        }
    }
    out.dedup();
    Ok(out)
}

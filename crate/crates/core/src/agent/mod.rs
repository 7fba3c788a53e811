//! The PCAR learner: per-attribute SARSA(lambda) agents keyed by
//! `(value, clipped tau, context)`, baselines, and the ghost audit.

mod audit;
mod bundle;
mod context;
mod oracle;
mod policy;
mod schema;

pub use audit::{ghost_audit, ghost_audit_with, GhostCounterexample, GhostReport, Lookup};
pub use bundle::{AgentBundle, AgentConfig, QModel, QSnapshot, SnapshotTable, Transition};
pub use context::{ContextBucket, Period};
pub use oracle::{
    plan_oracle, sequence_reward, train_on_instance, InstanceRun, OraclePlan, ORACLE_GUARD,
};
pub use policy::{control_policy, random_policy, Prescription};
pub use schema::{Attribute, AttributeSchema, AttributeVector};

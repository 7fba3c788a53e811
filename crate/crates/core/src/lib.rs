pub mod agent;
pub mod catalog;
pub mod cohort;
pub mod error;
pub mod lsd;
pub mod scheduler;
pub mod seed;
pub mod stats;
pub mod study;
pub mod time;

pub use agent::{AgentBundle, AgentConfig, AttributeSchema, AttributeVector, ContextBucket};
pub use error::{Error, Result};
pub use lsd::{ArmId, LsdState};

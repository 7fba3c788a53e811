use rand::Rng;
use serde::{Deserialize, Serialize};

use super::schema::{AttributeSchema, AttributeVector};

/// What a policy hands to the delivery layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prescription {
    /// Stress EMA prompt only, no content.
    EmaOnly,
    Content(AttributeVector),
}

impl Prescription {
    pub fn action(&self) -> Option<&AttributeVector> {
        match self {
            Prescription::EmaOnly => None,
            Prescription::Content(a) => Some(a),
        }
    }
}

/// Independent uniform draw per attribute.
pub fn random_policy<R: Rng + ?Sized>(schema: &AttributeSchema, rng: &mut R) -> AttributeVector {
    AttributeVector(
        schema
            .sizes()
            .into_iter()
            .map(|k| rng.random_range(0..k))
            .collect(),
    )
}

pub fn control_policy() -> Prescription {
    Prescription::EmaOnly
}

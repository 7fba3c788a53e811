use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub values: Vec<String>,
}

impl Attribute {
    pub fn new(name: impl Into<String>, values: &[&str]) -> Self {
        Attribute {
            name: name.into(),
            values: values.iter().map(|v| v.to_string()).collect(),
        }
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }
}

/// Ordered attribute dictionary an action decomposes into.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Attribute>", into = "Vec<Attribute>")]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::InvalidParameter(
                "schema needs at least one attribute".into(),
            ));
        }
        let mut names = HashSet::new();
        for a in &attributes {
            if a.values.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "attribute `{}` has no values",
                    a.name
                )));
            }
            if !names.insert(a.name.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate attribute `{}`",
                    a.name
                )));
            }
            let mut vals = HashSet::new();
            if let Some(dup) = a.values.iter().find(|v| !vals.insert(v.as_str())) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate value `{dup}` in attribute `{}`",
                    a.name
                )));
            }
        }
        Ok(AttributeSchema { attributes })
    }

    /// Emotional-regulation family, therapy group and location.
    pub fn intervention_default() -> Self {
        AttributeSchema::new(vec![
            Attribute::new(
                "emotional_regulation",
                &[
                    "response_modulation",
                    "attention_deployment",
                    "cognitive_change",
                    "situation_modification",
                ],
            ),
            Attribute::new(
                "therapy_group",
                &[
                    "positive_psychology",
                    "cognitive_behavioral",
                    "meta_cognitive",
                    "somatic",
                ],
            ),
            Attribute::new("location", &["indoor", "outdoor", "both"]),
        ])
        .expect("default schema is valid")
    }

    /// A schema with one attribute of `k` anonymous values.
    pub fn single(name: &str, k: usize) -> Result<Self> {
        AttributeSchema::new(vec![Attribute {
            name: name.to_string(),
            values: (0..k).map(|i| format!("arm{i}")).collect(),
        }])
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    /// P, the number of attributes.
    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.values.len()).collect()
    }

    /// C̃, the largest value count.
    pub fn max_values(&self) -> usize {
        self.sizes().into_iter().max().unwrap_or(0)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn validate(&self, action: &AttributeVector) -> Result<()> {
        if action.0.len() != self.attributes.len() {
            return Err(Error::InvalidAction(format!(
                "{} values for {} attributes",
                action.0.len(),
                self.attributes.len()
            )));
        }
        for (a, &v) in self.attributes.iter().zip(&action.0) {
            if v >= a.values.len() {
                return Err(Error::InvalidAction(format!(
                    "value index {v} out of range for `{}`",
                    a.name
                )));
            }
        }
        Ok(())
    }

    /// Builds a vector from value names in schema order.
    pub fn vector(&self, names: &[&str]) -> Result<AttributeVector> {
        if names.len() != self.attributes.len() {
            return Err(Error::InvalidAction(format!(
                "{} values for {} attributes",
                names.len(),
                self.attributes.len()
            )));
        }
        self.attributes
            .iter()
            .zip(names)
            .map(|(a, n)| {
                a.index_of(n).ok_or_else(|| {
                    Error::InvalidAction(format!("`{n}` is not a value of `{}`", a.name))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(AttributeVector)
    }

    pub fn names<'a>(&'a self, action: &AttributeVector) -> Vec<&'a str> {
        self.attributes
            .iter()
            .zip(&action.0)
            .map(|(a, &v)| a.values[v].as_str())
            .collect()
    }
}

impl TryFrom<Vec<Attribute>> for AttributeSchema {
    type Error = Error;

    fn try_from(value: Vec<Attribute>) -> Result<Self> {
        AttributeSchema::new(value)
    }
}

impl From<AttributeSchema> for Vec<Attribute> {
    fn from(s: AttributeSchema) -> Self {
        s.attributes
    }
}

/// One chosen value index per attribute, in schema order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeVector(pub Vec<usize>);

impl AttributeVector {
    pub fn values(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for AttributeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

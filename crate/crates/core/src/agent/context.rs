use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Period {
    Morning,
    Afternoon,
    Evening,
}

impl Period {
    pub const ALL: [Period; 3] = [Period::Morning, Period::Afternoon, Period::Evening];

    /// 8–11 morning, 12–16 afternoon, 17–21 evening. Hours outside the
    /// delivery window fall into the nearest period.
    pub fn from_hour(hour: i64) -> Self {
        match hour {
            h if h < 12 => Period::Morning,
            12..=16 => Period::Afternoon,
            _ => Period::Evening,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Period::Morning => "morning",
            Period::Afternoon => "afternoon",
            Period::Evening => "evening",
        }
    }
}

/// Action-independent context the value tables are conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextBucket {
    pub period: Period,
    pub trait_bucket: u8,
}

impl ContextBucket {
    pub fn new(period: Period, trait_bucket: u8) -> Self {
        ContextBucket {
            period,
            trait_bucket,
        }
    }

    pub fn from_hour(hour: i64, trait_bucket: u8) -> Self {
        ContextBucket::new(Period::from_hour(hour), trait_bucket)
    }

    /// Dense index given the number of trait buckets.
    pub fn index(&self, trait_buckets: usize) -> usize {
        self.period.index() * trait_buckets + self.trait_bucket as usize
    }

    pub fn from_index(index: usize, trait_buckets: usize) -> Self {
        ContextBucket {
            period: Period::ALL[index / trait_buckets],
            trait_bucket: (index % trait_buckets) as u8,
        }
    }
}

impl fmt::Display for ContextBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.period.name(), self.trait_bucket)
    }
}

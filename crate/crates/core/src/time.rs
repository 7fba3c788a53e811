//! Simulated calendar. Minute resolution, day 0 is a Monday.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const MINUTES_PER_DAY: i64 = 24 * 60;
pub const TICK_MINUTES: i64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Weekday {
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Saturday,
    Sunday,
}

impl Weekday {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_weekday(self) -> bool {
        self.index() < 5
    }

    fn from_index(i: i64) -> Self {
        match i.rem_euclid(7) {
            0 => Weekday::Monday,
            1 => Weekday::Tuesday,
            2 => Weekday::Wednesday,
            3 => Weekday::Thursday,
            4 => Weekday::Friday,
            5 => Weekday::Saturday,
            _ => Weekday::Sunday,
        }
    }
}

/// Minutes since the start of the simulated calendar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn at(day: i64, hour: i64, minute: i64) -> Self {
        Timestamp(day * MINUTES_PER_DAY + hour * 60 + minute)
    }

    pub fn day(self) -> i64 {
        self.0.div_euclid(MINUTES_PER_DAY)
    }

    pub fn minute_of_day(self) -> i64 {
        self.0.rem_euclid(MINUTES_PER_DAY)
    }

    pub fn hour(self) -> i64 {
        self.minute_of_day() / 60
    }

    pub fn weekday(self) -> Weekday {
        Weekday::from_index(self.day())
    }

    /// Zero-based calendar week.
    pub fn week(self) -> i64 {
        self.day().div_euclid(7)
    }

    pub fn plus_minutes(self, minutes: i64) -> Self {
        Timestamp(self.0 + minutes)
    }

    pub fn minutes_since(self, earlier: Timestamp) -> i64 {
        self.0 - earlier.0
    }

    pub fn on_tick_grid(self) -> bool {
        self.0.rem_euclid(TICK_MINUTES) == 0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.minute_of_day();
        write!(f, "d{}T{:02}:{:02}", self.day(), m / 60, m % 60)
    }
}

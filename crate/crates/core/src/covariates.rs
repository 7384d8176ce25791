//! Dummy encoding of the calendar context shared by both demand models.
//!
//! Coordinate layout of a [`CovariateVector`] (length [`NUM_COVARIATES`]):
//!
//! | index   | meaning                         |
//! |---------|---------------------------------|
//! | 0       | intercept, always 1             |
//! | 1..=6   | Tuesday, Wednesday, ..., Sunday |
//! | 7..=18  | hours 0..=11                    |
//! | 19..=29 | hours 13..=23                   |
//! | 30      | school holiday                  |
//!
//! Monday and the hour 12:00-12:59 are the reference categories (all dummies zero),
//! so one intercept, six weekday, 23 hour and one holiday column give 31 entries.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const NUM_COVARIATES: usize = 31;
pub const REFERENCE_HOUR: u8 = 12;

pub const WEEKDAY_OFFSET: usize = 1;
const HOUR_OFFSET: usize = 7;
const HOLIDAY_INDEX: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Weekday {
    Mon,
    Tue,
    Wed,
    Thu,
    Fri,
    Sat,
    Sun,
}

impl Weekday {
    pub const ALL: [Weekday; 7] = [
        Weekday::Mon,
        Weekday::Tue,
        Weekday::Wed,
        Weekday::Thu,
        Weekday::Fri,
        Weekday::Sat,
        Weekday::Sun,
    ];

    /// Zero-based index with Monday = 0.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Weekday {
        Self::ALL[i % 7]
    }

    pub fn succ(self) -> Weekday {
        Self::from_index(self.index() + 1)
    }

    pub fn short_name(self) -> &'static str {
        ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"][self.index()]
    }
}

impl fmt::Display for Weekday {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Weekday {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let day = match lower.get(..2) {
            Some("mo") => Weekday::Mon,
            Some("tu") => Weekday::Tue,
            Some("we") => Weekday::Wed,
            Some("th") => Weekday::Thu,
            Some("fr") => Weekday::Fri,
            Some("sa") => Weekday::Sat,
            Some("su") => Weekday::Sun,
            _ => match lower.parse::<usize>() {
                Ok(i) if i < 7 => Weekday::from_index(i),
                _ => return Err(format!("unrecognised weekday {s:?}")),
            },
        };
        Ok(day)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CalendarContext {
    pub weekday: Weekday,
    hour: u8,
    pub holiday: bool,
}

impl CalendarContext {
    /// Returns `None` when `hour > 23`.
    pub fn new(weekday: Weekday, hour: u8, holiday: bool) -> Option<Self> {
        (hour < 24).then_some(CalendarContext {
            weekday,
            hour,
            holiday,
        })
    }

    pub fn hour(&self) -> u8 {
        self.hour
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateVector(Vec<f64>);

impl CovariateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, coef: &[f64]) -> f64 {
        debug_assert_eq!(coef.len(), self.0.len());
        self.0.iter().zip(coef).map(|(x, b)| x * b).sum()
    }

    /// Builds a vector from raw values; used for synthetic designs in tests
    /// and for intercept-only models.
    pub fn from_raw(values: Vec<f64>) -> Self {
        CovariateVector(values)
    }
}

/// Index of the dummy for `hour`, or `None` for the reference hour.
pub fn hour_index(hour: u8) -> Option<usize> {
    match hour {
        REFERENCE_HOUR => None,
        h if h < REFERENCE_HOUR => Some(HOUR_OFFSET + h as usize),
        h => Some(HOUR_OFFSET + h as usize - 1),
    }
}

pub fn encode(ctx: &CalendarContext) -> CovariateVector {
    let mut v = vec![0.0; NUM_COVARIATES];
    v[0] = 1.0;
    if ctx.weekday != Weekday::Mon {
        v[WEEKDAY_OFFSET + ctx.weekday.index() - 1] = 1.0;
    }
    if let Some(i) = hour_index(ctx.hour) {
        v[i] = 1.0;
    }
    if ctx.holiday {
        v[HOLIDAY_INDEX] = 1.0;
    }
    CovariateVector(v)
}

/// Column labels in coordinate order.
pub fn covariate_names() -> Vec<String> {
    let mut names = vec!["intercept".to_string()];
    names.extend(Weekday::ALL[1..].iter().map(|d| d.short_name().to_lowercase()));
    names.extend((0..24u8).filter(|&h| h != REFERENCE_HOUR).map(|h| format!("h{h:02}")));
    names.push("holiday".into());
    names
}

//! Quarterly calendar index.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A calendar quarter, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    year: i32,
    quarter: u8,
}

impl Quarter {
    pub fn new(year: i32, quarter: u8) -> Result<Self> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::Data(format!("quarter must be 1..=4, got {quarter}")));
        }
        Ok(Self { year, quarter })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn quarter(self) -> u8 {
        self.quarter
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 4 + (self.quarter as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(4) as i32,
            quarter: (ord.rem_euclid(4) + 1) as u8,
        }
    }

    /// Shift by `n` quarters (negative moves back in time).
    pub fn offset(self, n: i64) -> Self {
        Self::from_ordinal(self.ordinal() + n)
    }

    /// Number of quarters from `self` to `later` (negative if `later` is earlier).
    pub fn quarters_until(self, later: Quarter) -> i64 {
        later.ordinal() - self.ordinal()
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

fn month_to_quarter(month: u32) -> Result<u8> {
    if !(1..=12).contains(&month) {
        return Err(Error::Data(format!("invalid month {month}")));
    }
    Ok(((month - 1) / 3 + 1) as u8)
}

/// Accepts `1960Q1`, `1960-03-01` and the FRED-QD style `3/1/1960`.
impl FromStr for Quarter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Data(format!("unrecognised date `{s}`"));
        if let Some((y, q)) = s.split_once(['Q', 'q']) {
            let year = y.trim().parse().map_err(|_| bad())?;
            let quarter = q.trim().parse().map_err(|_| bad())?;
            return Quarter::new(year, quarter);
        }
        if s.contains('-') {
            let mut parts = s.split('-');
            let year = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let month: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            return Quarter::new(year, month_to_quarter(month)?);
        }
        if s.contains('/') {
            let parts: Vec<&str> = s.split('/').collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            let month: u32 = parts[0].parse().map_err(|_| bad())?;
            let mut year: i32 = parts[2].parse().map_err(|_| bad())?;
            if parts[2].len() == 2 {
                year += if year < 50 { 2000 } else { 1900 };
            }
            return Quarter::new(year, month_to_quarter(month)?);
        }
        Err(bad())
    }
}

impl Serialize for Quarter {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Inclusive range of quarters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarterRange {
    pub start: Quarter,
    pub end: Quarter,
}

impl QuarterRange {
    pub fn contains(&self, q: Quarter) -> bool {
        self.start <= q && q <= self.end
    }

    pub fn iter(&self) -> impl Iterator<Item = Quarter> {
        let start = self.start;
        let n = start.quarters_until(self.end);
        (0..=n).map(move |k| start.offset(k))
    }
}

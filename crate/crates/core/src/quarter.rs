use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A calendar quarter, encoded as `year * 4 + (quarter - 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter(i32);

impl Quarter {
    pub fn new(year: i32, quarter: u8) -> Self {
        assert!((1..=4).contains(&quarter), "quarter must be in 1..=4");
        Quarter(year * 4 + i32::from(quarter) - 1)
    }

    pub fn from_index(index: i32) -> Self {
        Quarter(index)
    }

    pub fn index(self) -> i32 {
        self.0
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(4)
    }

    /// Quarter of the year, 1..=4.
    pub fn quarter_of_year(self) -> u8 {
        (self.0.rem_euclid(4) + 1) as u8
    }

    pub fn offset(self, quarters: i32) -> Self {
        Quarter(self.0 + quarters)
    }

    pub fn next(self) -> Self {
        self.offset(1)
    }

    pub fn prev(self) -> Self {
        self.offset(-1)
    }

    /// Signed number of quarters from `self` to `later`.
    pub fn quarters_until(self, later: Quarter) -> i32 {
        later.0 - self.0
    }

    /// Iterator over `[self, end)`.
    pub fn range_to(self, end: Quarter) -> impl Iterator<Item = Quarter> {
        (self.0..end.0).map(Quarter)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year(), self.quarter_of_year())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid quarter {0:?}, expected e.g. 2007Q4")]
pub struct ParseQuarterError(pub String);

impl FromStr for Quarter {
    type Err = ParseQuarterError;

    /// Accepts `2007Q4`, `2007:Q4`, `2007-Q4` and lowercase `q`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseQuarterError(s.to_string());
        let t = s.trim();
        let pos = t.find(['Q', 'q']).ok_or_else(err)?;
        let year_part = t[..pos].trim_end_matches([':', '-', ' ']);
        let year: i32 = year_part.parse().map_err(|_| err())?;
        let q: u8 = t[pos + 1..].parse().map_err(|_| err())?;
        if !(1..=4).contains(&q) {
            return Err(err());
        }
        Ok(Quarter::new(year, q))
    }
}

impl Serialize for Quarter {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let q: Quarter = "2007:Q4".parse().unwrap();
        assert_eq!(q, Quarter::new(2007, 4));
        assert_eq!(q.to_string(), "2007Q4");
        assert_eq!(q.next().to_string(), "2008Q1");
        assert_eq!("1999q1".parse::<Quarter>().unwrap().prev().to_string(), "1998Q4");
        assert!("2007Q5".parse::<Quarter>().is_err());
        assert!("Q3".parse::<Quarter>().is_err());
    }

    #[test]
    fn arithmetic() {
        let a = Quarter::new(2006, 1);
        let b = Quarter::new(2012, 2);
        assert_eq!(a.quarters_until(b), 25);
        assert_eq!(a.range_to(a.offset(3)).count(), 3);
    }
}

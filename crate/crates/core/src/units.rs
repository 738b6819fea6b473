//! Currency and basis-point newtypes with their file encodings.
//!
//! Currency amounts travel as decimal strings so that input files never pass
//! through a binary float on the way in; basis points are written as integers
//! whenever they are integral.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A USD amount (the data files use USD millions throughout).
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Usd(pub f64);

/// Basis points, 1/100 of a percent.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Bps(pub f64);

impl Bps {
    /// Annual rate as a fraction.
    pub fn as_fraction(self) -> f64 {
        self.0 / 10_000.0
    }

    /// Annual rate in percent.
    pub fn as_pct(self) -> f64 {
        self.0 / 100.0
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Bps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Usd {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        // `Display` for f64 is the shortest string that parses back to the same value.
        s.collect_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Usd {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(NumberOrString).map(Usd)
    }
}

impl Serialize for Bps {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.fract() == 0.0 && v.abs() < 1e15 {
            s.serialize_i64(v as i64)
        } else {
            s.serialize_f64(v)
        }
    }
}

impl<'de> Deserialize<'de> for Bps {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(NumberOrString).map(Bps)
    }
}

struct NumberOrString;

impl Visitor<'_> for NumberOrString {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a number or a decimal string")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
        let x: f64 = v.trim().parse().map_err(E::custom)?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(E::custom(format!("non-finite amount {v:?}")))
        }
    }
}

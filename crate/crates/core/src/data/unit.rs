//! Dimensional bookkeeping for feature columns and expressions.
//!
//! A [`Unit`] is a product of powers of three base quantities used by the
//! feature table: energy per mass (Hartree per g/mol), area and mass. Powers
//! are tracked in halves so that square roots stay exact.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::DataError;

const BASE_NAMES: [&str; 3] = ["energy_per_mass", "area", "mass"];

/// Product of powers of the base quantities. Exponents are stored doubled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Unit {
    half_powers: [i32; 3],
}

impl Unit {
    pub const DIMENSIONLESS: Unit = Unit { half_powers: [0, 0, 0] };
    pub const ENERGY_PER_MASS: Unit = Unit { half_powers: [2, 0, 0] };
    pub const AREA: Unit = Unit { half_powers: [0, 2, 0] };
    pub const MASS: Unit = Unit { half_powers: [0, 0, 2] };

    pub fn is_dimensionless(&self) -> bool {
        self.half_powers == [0, 0, 0]
    }

    pub fn mul(self, other: Unit) -> Unit {
        let mut half_powers = self.half_powers;
        for (a, b) in half_powers.iter_mut().zip(other.half_powers) {
            *a += b;
        }
        Unit { half_powers }
    }

    pub fn div(self, other: Unit) -> Unit {
        self.mul(other.recip())
    }

    pub fn recip(self) -> Unit {
        Unit {
            half_powers: self.half_powers.map(|p| -p),
        }
    }

    /// Raises to an integer power.
    pub fn powi(self, n: i32) -> Unit {
        Unit {
            half_powers: self.half_powers.map(|p| p * n),
        }
    }

    /// Square root; `None` when an exponent would drop below half-integer
    /// resolution.
    pub fn sqrt(self) -> Option<Unit> {
        if self.half_powers.iter().any(|p| p % 2 != 0) {
            return None;
        }
        Some(Unit {
            half_powers: self.half_powers.map(|p| p / 2),
        })
    }

    /// Raises to a real power; only exact multiples of one half are
    /// representable for dimensional units.
    pub fn powf(self, exponent: f64) -> Option<Unit> {
        if self.is_dimensionless() {
            return Some(self);
        }
        let doubled = exponent * 2.0;
        if !doubled.is_finite() || doubled.fract() != 0.0 {
            return None;
        }
        let doubled = doubled as i64;
        let mut half_powers = [0i32; 3];
        for (out, p) in half_powers.iter_mut().zip(self.half_powers) {
            let prod = p as i64 * doubled;
            if prod % 2 != 0 {
                return None;
            }
            *out = i32::try_from(prod / 2).ok()?;
        }
        Some(Unit { half_powers })
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dimensionless() {
            return f.write_str("dimensionless");
        }
        let mut first = true;
        for (name, p) in BASE_NAMES.iter().zip(self.half_powers) {
            if p == 0 {
                continue;
            }
            if !first {
                f.write_str("*")?;
            }
            first = false;
            f.write_str(name)?;
            if p != 2 {
                if p % 2 == 0 {
                    write!(f, "^{}", p / 2)?;
                } else {
                    write!(f, "^{}/2", p)?;
                }
            }
        }
        Ok(())
    }
}

impl FromStr for Unit {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DataError::BadUnit(s.to_string());
        let s = s.trim();
        if s == "dimensionless" || s.is_empty() {
            return Ok(Unit::DIMENSIONLESS);
        }
        let mut unit = Unit::DIMENSIONLESS;
        for factor in s.split('*') {
            let (name, power) = match factor.split_once('^') {
                Some((n, p)) => (n.trim(), p.trim()),
                None => (factor.trim(), "1"),
            };
            let idx = BASE_NAMES.iter().position(|b| *b == name).ok_or_else(bad)?;
            let half = match power.split_once('/') {
                Some((num, "2")) => num.parse::<i32>().map_err(|_| bad())?,
                Some(_) => return Err(bad()),
                None => power.parse::<i32>().map_err(|_| bad())? * 2,
            };
            unit.half_powers[idx] += half;
        }
        Ok(unit)
    }
}

impl Serialize for Unit {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Unit {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

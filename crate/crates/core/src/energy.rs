//! Exact energy quantities.
//!
//! Node budgets and ledger entries are kept as whole attojoules so that
//! `initial − residual` always equals the sum of everything charged,
//! bit for bit.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

const UNITS_PER_JOULE: u128 = 1_000_000_000_000_000_000;
const FRACTION_DIGITS: usize = 18;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Energy(u128);

impl Energy {
    pub const ZERO: Energy = Energy(0);

    /// Rounds a joule value to the nearest attojoule. Negative and
    /// non-finite inputs map to zero.
    pub fn from_joules(joules: f64) -> Self {
        if !joules.is_finite() || joules <= 0.0 {
            return Energy(0);
        }
        Energy((joules * UNITS_PER_JOULE as f64).round() as u128)
    }

    pub const fn from_attojoules(units: u128) -> Self {
        Energy(units)
    }

    pub const fn attojoules(self) -> u128 {
        self.0
    }

    pub fn joules(self) -> f64 {
        let whole = (self.0 / UNITS_PER_JOULE) as f64;
        let frac = (self.0 % UNITS_PER_JOULE) as f64 / UNITS_PER_JOULE as f64;
        whole + frac
    }

    pub fn saturating_sub(self, other: Energy) -> Energy {
        Energy(self.0.saturating_sub(other.0))
    }

    pub fn min(self, other: Energy) -> Energy {
        Energy(self.0.min(other.0))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Add for Energy {
    type Output = Energy;
    fn add(self, rhs: Energy) -> Energy {
        Energy(self.0 + rhs.0)
    }
}

impl AddAssign for Energy {
    fn add_assign(&mut self, rhs: Energy) {
        self.0 += rhs.0;
    }
}

impl Sub for Energy {
    type Output = Energy;
    fn sub(self, rhs: Energy) -> Energy {
        Energy(self.0 - rhs.0)
    }
}

impl Sum for Energy {
    fn sum<I: Iterator<Item = Energy>>(iter: I) -> Energy {
        iter.fold(Energy::ZERO, Add::add)
    }
}

/// Exact decimal joules with trailing zeros trimmed, e.g. `23760` or
/// `0.0025`.
impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / UNITS_PER_JOULE;
        let frac = self.0 % UNITS_PER_JOULE;
        if frac == 0 {
            return write!(f, "{whole}");
        }
        let digits = format!("{frac:0width$}", width = FRACTION_DIGITS);
        write!(f, "{whole}.{}", digits.trim_end_matches('0'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseEnergyError(String);

impl fmt::Display for ParseEnergyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid energy `{}`", self.0)
    }
}

impl std::error::Error for ParseEnergyError {}

/// Parses a non-negative decimal joule value exactly (up to 18 fractional
/// digits). Exponent notation falls back to `f64` parsing.
impl FromStr for Energy {
    type Err = ParseEnergyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseEnergyError(s.to_string());
        let s = s.trim();
        if s.contains(['e', 'E']) {
            let v: f64 = s.parse().map_err(|_| err())?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(err());
            }
            return Ok(Energy::from_joules(v));
        }
        let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
        if whole.is_empty() && frac.is_empty() {
            return Err(err());
        }
        if !whole.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
            || frac.len() > FRACTION_DIGITS
        {
            return Err(err());
        }
        let whole: u128 = if whole.is_empty() {
            0
        } else {
            whole.parse().map_err(|_| err())?
        };
        let frac_units: u128 = if frac.is_empty() {
            0
        } else {
            let padded = format!("{frac:0<width$}", width = FRACTION_DIGITS);
            padded.parse().map_err(|_| err())?
        };
        whole
            .checked_mul(UNITS_PER_JOULE)
            .and_then(|w| w.checked_add(frac_units))
            .map(Energy)
            .ok_or_else(err)
    }
}

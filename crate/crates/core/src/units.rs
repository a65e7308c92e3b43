use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A duration held as an integer number of nanoseconds.
///
/// All frame and slot arithmetic is done on this type so that symbol-count
/// ceilings and subframe alignment are exact. Analytic formulas convert to
/// `f64` seconds at the boundary via [`Nanos::secs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nanos(pub u64);

impl Nanos {
    pub const ZERO: Nanos = Nanos(0);
    pub const MAX: Nanos = Nanos(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        Nanos(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        Nanos(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        Nanos(s * 1_000_000_000)
    }

    /// Rounds to the nearest nanosecond; negative and non-finite inputs map to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_finite() && s > 0.0 {
            Nanos((s * 1e9).round() as u64)
        } else {
            Nanos(0)
        }
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn secs(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn micros(self) -> f64 {
        self.0 as f64 * 1e-3
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn saturating_sub(self, rhs: Nanos) -> Nanos {
        Nanos(self.0.saturating_sub(rhs.0))
    }

    /// Smallest multiple of `quantum` that is `>= self`.
    pub fn ceil_to(self, quantum: Nanos) -> Nanos {
        debug_assert!(quantum.0 > 0);
        Nanos(self.0.div_ceil(quantum.0) * quantum.0)
    }

    /// Nearest multiple of `quantum`, ties rounding up.
    pub fn round_to(self, quantum: Nanos) -> Nanos {
        debug_assert!(quantum.0 > 0);
        Nanos((self.0 + quantum.0 / 2) / quantum.0 * quantum.0)
    }

    pub const fn is_multiple_of(self, quantum: Nanos) -> bool {
        quantum.0 != 0 && self.0.is_multiple_of(quantum.0)
    }
}

impl Add for Nanos {
    type Output = Nanos;
    fn add(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 + rhs.0)
    }
}

impl AddAssign for Nanos {
    fn add_assign(&mut self, rhs: Nanos) {
        self.0 += rhs.0;
    }
}

impl Sub for Nanos {
    type Output = Nanos;
    fn sub(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 - rhs.0)
    }
}

impl Mul<u64> for Nanos {
    type Output = Nanos;
    fn mul(self, rhs: u64) -> Nanos {
        Nanos(self.0 * rhs)
    }
}

impl fmt::Display for Nanos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(1_000_000) {
            write!(f, "{}ms", self.0 / 1_000_000)
        } else if self.0.is_multiple_of(1_000) {
            write!(f, "{}us", self.0 / 1_000)
        } else {
            write!(f, "{}ns", self.0)
        }
    }
}

//! Extended reals `ℝ ∪ {+∞}`.
//!
//! `-∞` and NaN are not representable. `+∞` is a tag, not the IEEE
//! infinity, so an infeasible point is never confused with an overflow in
//! the smooth part.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    /// Wraps a finite float. Returns `None` for NaN or either IEEE infinity.
    pub fn finite(value: f64) -> Option<Self> {
        value.is_finite().then_some(ExtReal::Finite(value))
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn as_finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    /// IEEE view, for reporting only.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }
}

impl Eq for ExtReal {}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => {
                a.partial_cmp(b).expect("finite values are ordered")
            }
            (ExtReal::Finite(_), ExtReal::PosInf) => Ordering::Less,
            (ExtReal::PosInf, ExtReal::Finite(_)) => Ordering::Greater,
            (ExtReal::PosInf, ExtReal::PosInf) => Ordering::Equal,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInf,
        }
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;

    /// `rhs` must be finite; callers check the smooth part before mixing.
    fn add(self, rhs: f64) -> ExtReal {
        debug_assert!(rhs.is_finite());
        self + ExtReal::Finite(rhs)
    }
}

impl From<f64> for ExtReal {
    /// Panics on NaN or `-∞`; `+∞` maps to `PosInf`.
    fn from(value: f64) -> Self {
        if value == f64::INFINITY {
            ExtReal::PosInf
        } else {
            ExtReal::finite(value).expect("ExtReal cannot hold NaN or -inf")
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => f.write_str("+inf"),
        }
    }
}

//! Extended reals `{-inf} ∪ R ∪ {+inf}` with the maximization conventions used
//! throughout the crate.
//!
//! The two rules that differ from IEEE arithmetic:
//!
//! * `(+inf) + (-inf) = (-inf) + (+inf) = -inf`
//! * `0 * (±inf) = (±inf) * 0 = 0`
//!
//! A value is never NaN; constructors reject it.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, PartialEq)]
pub struct XReal(f64);

impl XReal {
    pub const NEG_INF: XReal = XReal(f64::NEG_INFINITY);
    pub const POS_INF: XReal = XReal(f64::INFINITY);
    pub const ZERO: XReal = XReal(0.0);
    pub const ONE: XReal = XReal(1.0);

    /// Panics on NaN.
    pub fn new(v: f64) -> Self {
        assert!(!v.is_nan(), "XReal cannot hold NaN");
        XReal(v)
    }

    pub fn try_new(v: f64) -> Option<Self> {
        (!v.is_nan()).then_some(XReal(v))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_neg_inf(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn is_pos_inf(self) -> bool {
        self.0 == f64::INFINITY
    }

    /// `max(x, 0)`
    pub fn pos_part(self) -> Self {
        if self.0 > 0.0 {
            self
        } else {
            XReal::ZERO
        }
    }

    /// `max(-x, 0)`
    pub fn neg_part(self) -> Self {
        if self.0 < 0.0 {
            XReal(-self.0)
        } else {
            XReal::ZERO
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    /// `sum_j w_j * v_j` under the conventions. Weights are finite and nonnegative.
    pub fn weighted_sum<I>(terms: I) -> XReal
    where
        I: IntoIterator<Item = (f64, XReal)>,
    {
        let mut acc = 0.0f64;
        let mut has_pos_inf = false;
        for (w, v) in terms {
            if w == 0.0 {
                continue;
            }
            if v.is_neg_inf() {
                return XReal::NEG_INF;
            }
            if v.is_pos_inf() {
                has_pos_inf = true;
            } else {
                acc += w * v.0;
            }
        }
        if has_pos_inf {
            XReal::POS_INF
        } else {
            XReal::new(acc)
        }
    }
}

impl Add for XReal {
    type Output = XReal;

    fn add(self, rhs: XReal) -> XReal {
        if self.is_neg_inf() || rhs.is_neg_inf() {
            XReal::NEG_INF
        } else {
            XReal(self.0 + rhs.0)
        }
    }
}

impl Sub for XReal {
    type Output = XReal;

    fn sub(self, rhs: XReal) -> XReal {
        self + (-rhs)
    }
}

impl Neg for XReal {
    type Output = XReal;

    fn neg(self) -> XReal {
        XReal(-self.0)
    }
}

impl Mul for XReal {
    type Output = XReal;

    fn mul(self, rhs: XReal) -> XReal {
        if self.0 == 0.0 || rhs.0 == 0.0 {
            XReal::ZERO
        } else {
            XReal(self.0 * rhs.0)
        }
    }
}

impl Mul<f64> for XReal {
    type Output = XReal;

    fn mul(self, rhs: f64) -> XReal {
        self * XReal::new(rhs)
    }
}

impl Sum for XReal {
    fn sum<I: Iterator<Item = XReal>>(iter: I) -> XReal {
        iter.fold(XReal::ZERO, |a, b| a + b)
    }
}

impl Eq for XReal {}

impl PartialOrd for XReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for XReal {
    fn cmp(&self, other: &Self) -> Ordering {
        // No NaN and -0.0 == 0.0.
        self.0.partial_cmp(&other.0).unwrap_or(Ordering::Equal)
    }
}

impl From<f64> for XReal {
    fn from(v: f64) -> Self {
        XReal::new(v)
    }
}

impl fmt::Debug for XReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for XReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pos_inf() {
            write!(f, "+inf")
        } else if self.is_neg_inf() {
            write!(f, "-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Finite values serialize as JSON numbers, infinities as `"+inf"` / `"-inf"`.
impl Serialize for XReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.is_finite() {
            s.serialize_f64(self.0)
        } else if self.is_pos_inf() {
            s.serialize_str("+inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for XReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => XReal::try_new(v).ok_or_else(|| serde::de::Error::custom("NaN")),
            Repr::Str(s) => match s.as_str() {
                "+inf" | "inf" | "Infinity" | "+Infinity" => Ok(XReal::POS_INF),
                "-inf" | "-Infinity" => Ok(XReal::NEG_INF),
                other => Err(serde::de::Error::custom(format!(
                    "expected a number, \"+inf\" or \"-inf\", got {other:?}"
                ))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinity_conventions() {
        let a = XReal::new(3.5);
        assert_eq!(a + XReal::POS_INF, XReal::POS_INF);
        assert_eq!(a + XReal::NEG_INF, XReal::NEG_INF);
        assert_eq!(XReal::POS_INF + XReal::NEG_INF, XReal::NEG_INF);
        assert_eq!(XReal::NEG_INF + XReal::POS_INF, XReal::NEG_INF);
        assert_eq!(XReal::ZERO * XReal::POS_INF, XReal::ZERO);
        assert_eq!(XReal::NEG_INF * XReal::ZERO, XReal::ZERO);
        assert_eq!(-XReal::POS_INF, XReal::NEG_INF);
        assert_eq!(XReal::POS_INF - XReal::POS_INF, XReal::NEG_INF);
    }

    #[test]
    fn total_order() {
        let mut v = vec![XReal::POS_INF, XReal::new(-1.0), XReal::NEG_INF, XReal::new(2.0)];
        v.sort();
        assert_eq!(
            v,
            vec![XReal::NEG_INF, XReal::new(-1.0), XReal::new(2.0), XReal::POS_INF]
        );
    }

    #[test]
    fn weighted_sum_mixed_infinities_is_neg_inf() {
        let s = XReal::weighted_sum([(0.6, XReal::POS_INF), (0.4, XReal::NEG_INF)]);
        assert!(s.is_neg_inf());
        // zero weight ignores an infinite value
        let s = XReal::weighted_sum([(1.0, XReal::new(2.0)), (0.0, XReal::NEG_INF)]);
        assert_eq!(s, XReal::new(2.0));
    }

    #[test]
    fn serde_infinities() {
        let s = serde_json::to_string(&vec![XReal::NEG_INF, XReal::new(1.5)]).unwrap();
        assert_eq!(s, "[\"-inf\",1.5]");
        let back: Vec<XReal> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[0], XReal::NEG_INF);
    }
}

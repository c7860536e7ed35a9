//! Scalar abstraction shared by measures, weights and the composition view.
//!
//! Three families implement it: exact [`Rational`]s, outward-rounded
//! [`Interval`]s and hardware floats. Comparisons go through
//! [`Scalar::discrepancy`], which reports both a certified lower bound on the
//! distance between two values (`gap`) and an upper bound (`sup`).

use std::cmp::Ordering;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use num_traits::{One, Signed, Zero};
use serde::Deserialize;

use crate::interval::Interval;
use crate::rational::{format_rational, from_f64, max_of, parse_rational, to_f64, Rational};

/// Distance bounds between two scalars: every admissible pair of exact
/// values has distance in `[gap, sup]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Discrepancy {
    pub gap: Rational,
    pub sup: Rational,
}

impl Discrepancy {
    pub fn zero() -> Self {
        Discrepancy {
            gap: Rational::zero(),
            sup: Rational::zero(),
        }
    }

    /// Componentwise maximum.
    pub fn max(&self, other: &Discrepancy) -> Discrepancy {
        Discrepancy {
            gap: max_of(&self.gap, &other.gap),
            sup: max_of(&self.sup, &other.sup),
        }
    }

    /// True when the values may coincide and differ by at most `tol`.
    pub fn within(&self, tol: &Rational) -> bool {
        self.gap.is_zero() && &self.sup <= tol
    }
}

pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Send
    + Sync
    + 'static
{
    /// Whether arithmetic on this type is exact.
    const EXACT: bool;

    fn from_rational(x: &Rational) -> Self;

    fn from_integer(v: i64) -> Self {
        Self::from_rational(&Rational::from_integer(v.into()))
    }

    /// Sign if it is certain; `None` for enclosures straddling zero or NaN.
    fn sign(&self) -> Option<Ordering>;

    fn discrepancy(&self, other: &Self) -> Discrepancy;

    fn approx_f64(&self) -> f64;

    /// Rational upper bound on `|self|`; `None` for non-finite floats.
    fn magnitude_bound(&self) -> Option<Rational>;

    /// Enclosure of the value; `None` for non-finite floats.
    fn to_interval(&self) -> Option<Interval>;

    fn to_json(&self) -> serde_json::Value;

    fn from_json(v: &serde_json::Value) -> Result<Self, String>;

    fn powi(&self, exp: i32) -> Self {
        if exp < 0 {
            return (Self::one() / self.clone()).powi(-exp);
        }
        let mut acc = Self::one();
        for _ in 0..exp {
            acc = acc * self.clone();
        }
        acc
    }

    fn is_certainly_positive(&self) -> bool {
        self.sign() == Some(Ordering::Greater)
    }

    fn may_be_zero(&self) -> bool {
        !matches!(self.sign(), Some(Ordering::Greater | Ordering::Less))
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_rational(x: &Rational) -> Self {
        x.clone()
    }

    fn sign(&self) -> Option<Ordering> {
        Some(self.cmp(&Rational::zero()))
    }

    fn discrepancy(&self, other: &Self) -> Discrepancy {
        let d = (self - other).abs();
        Discrepancy {
            gap: d.clone(),
            sup: d,
        }
    }

    fn approx_f64(&self) -> f64 {
        to_f64(self)
    }

    fn magnitude_bound(&self) -> Option<Rational> {
        Some(self.abs())
    }

    fn to_interval(&self) -> Option<Interval> {
        Some(Interval::point(self.clone()))
    }

    fn to_json(&self) -> serde_json::Value {
        format_rational(self).into()
    }

    fn from_json(v: &serde_json::Value) -> Result<Self, String> {
        match v {
            serde_json::Value::String(s) => parse_rational(s).map_err(|e| e.to_string()),
            serde_json::Value::Number(n) if n.is_i64() => {
                Ok(Rational::from_integer(n.as_i64().unwrap_or_default().into()))
            }
            other => Err(format!("expected a rational string, got {other}")),
        }
    }
}

impl Scalar for Interval {
    const EXACT: bool = false;

    fn from_rational(x: &Rational) -> Self {
        Interval::point(x.clone())
    }

    fn sign(&self) -> Option<Ordering> {
        Interval::sign(self)
    }

    fn discrepancy(&self, other: &Self) -> Discrepancy {
        let gap = if self.hi() < other.lo() {
            other.lo() - self.hi()
        } else if other.hi() < self.lo() {
            self.lo() - other.hi()
        } else {
            Rational::zero()
        };
        let sup = max_of(&(other.hi() - self.lo()), &(self.hi() - other.lo()));
        Discrepancy { gap, sup }
    }

    fn approx_f64(&self) -> f64 {
        self.approx()
    }

    fn magnitude_bound(&self) -> Option<Rational> {
        Some(max_of(&self.lo().abs(), &self.hi().abs()))
    }

    fn to_interval(&self) -> Option<Interval> {
        Some(self.clone())
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or_default()
    }

    fn from_json(v: &serde_json::Value) -> Result<Self, String> {
        Interval::deserialize(v).map_err(|e| e.to_string())
    }

    fn powi(&self, exp: i32) -> Self {
        Interval::powi(self, exp)
    }
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const EXACT: bool = false;

            fn from_rational(x: &Rational) -> Self {
                to_f64(x) as $t
            }

            fn sign(&self) -> Option<Ordering> {
                self.partial_cmp(&0.0)
            }

            /// Floats carry no error bound, so the gap is always zero and the
            /// caller's tolerance does all the work.
            fn discrepancy(&self, other: &Self) -> Discrepancy {
                let d = (f64::from(*self) - f64::from(*other)).abs();
                match from_f64(d) {
                    Some(sup) => Discrepancy {
                        gap: Rational::zero(),
                        sup,
                    },
                    None => Discrepancy {
                        gap: Rational::one(),
                        sup: Rational::one(),
                    },
                }
            }

            fn approx_f64(&self) -> f64 {
                f64::from(*self)
            }

            fn magnitude_bound(&self) -> Option<Rational> {
                from_f64(f64::from(*self).abs())
            }

            fn to_interval(&self) -> Option<Interval> {
                from_f64(f64::from(*self)).map(Interval::point)
            }

            fn to_json(&self) -> serde_json::Value {
                serde_json::json!(*self)
            }

            fn from_json(v: &serde_json::Value) -> Result<Self, String> {
                v.as_f64()
                    .map(|x| x as $t)
                    .ok_or_else(|| format!("expected a number, got {v}"))
            }

            fn powi(&self, exp: i32) -> Self {
                <$t>::powi(*self, exp)
            }
        }
    };
}

float_scalar!(f64);
float_scalar!(f32);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    #[test]
    fn rational_discrepancy_is_exact() {
        let d = rat(1, 2).discrepancy(&rat(1, 3));
        assert_eq!(d.gap, rat(1, 6));
        assert_eq!(d.sup, rat(1, 6));
    }

    #[test]
    fn interval_discrepancy_bounds() {
        let a = Interval::new(int(0), int(1)).unwrap();
        let b = Interval::new(int(3), int(4)).unwrap();
        let d = a.discrepancy(&b);
        assert_eq!(d.gap, int(2));
        assert_eq!(d.sup, int(4));
        let c = Interval::new(rat(1, 2), int(2)).unwrap();
        let d = a.discrepancy(&c);
        assert!(d.gap.is_zero());
        assert_eq!(d.sup, int(2));
        assert!(!d.within(&int(1)));
        assert!(d.within(&int(2)));
    }

    #[test]
    fn float_discrepancy_has_no_gap() {
        let d = 1.0f64.discrepancy(&1.25);
        assert!(d.gap.is_zero());
        assert_eq!(d.sup, rat(1, 4));
        assert!(!f64::NAN.discrepancy(&0.0).within(&int(10)));
    }

    #[test]
    fn signs() {
        assert_eq!(Scalar::sign(&rat(-1, 2)), Some(Ordering::Less));
        assert!(Interval::new(int(-1), int(1)).unwrap().may_be_zero());
        assert!(2.0f32.is_certainly_positive());
    }

    #[test]
    fn generic_powers() {
        assert_eq!(Scalar::powi(&rat(2, 3), -2), rat(9, 4));
        assert_eq!(Scalar::powi(&3.0f64, 3), 27.0);
        assert_eq!(Scalar::powi(&Interval::point(int(2)), 4), Interval::point(int(16)));
    }
}

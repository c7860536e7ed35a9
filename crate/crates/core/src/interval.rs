//! Closed intervals with exact rational endpoints.
//!
//! Point intervals combine exactly. As soon as one operand has positive
//! width, the exact endpoint result is rounded outward to
//! [`PRECISION_BITS`] significant bits, so repeated arithmetic keeps bounded
//! size while the enclosure stays sound.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::rational::{
    format_rational, max_of, min_of, parse_rational, round_to_bits, to_f64, Direction, Rational,
};

/// Significant bits kept on each endpoint after an inexact operation.
pub const PRECISION_BITS: u32 = 192;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Interval {
    lo: Rational,
    hi: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntervalError {
    #[error("interval endpoints out of order: {lo} > {hi}")]
    Reversed { lo: String, hi: String },
    #[error("division by an interval containing zero")]
    DivisionByZero,
}

impl Interval {
    pub fn new(lo: Rational, hi: Rational) -> Result<Self, IntervalError> {
        if lo > hi {
            return Err(IntervalError::Reversed {
                lo: format_rational(&lo),
                hi: format_rational(&hi),
            });
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: Rational) -> Self {
        Self {
            lo: x.clone(),
            hi: x,
        }
    }

    /// Outward-rounded enclosure of `[lo, hi]`.
    pub fn rounded(lo: Rational, hi: Rational) -> Self {
        debug_assert!(lo <= hi);
        Self {
            lo: round_to_bits(&lo, PRECISION_BITS, Direction::Down),
            hi: round_to_bits(&hi, PRECISION_BITS, Direction::Up),
        }
    }

    pub fn lo(&self) -> &Rational {
        &self.lo
    }

    pub fn hi(&self) -> &Rational {
        &self.hi
    }

    pub fn width(&self) -> Rational {
        &self.hi - &self.lo
    }

    pub fn midpoint(&self) -> Rational {
        (&self.lo + &self.hi) / Rational::from_integer(2.into())
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &Rational) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn contains_zero(&self) -> bool {
        !self.lo.is_positive() && !self.hi.is_negative()
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn encloses(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Smallest interval containing both.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: min_of(&self.lo, &other.lo),
            hi: max_of(&self.hi, &other.hi),
        }
    }

    /// Intersection with `[0, +inf)`; `None` if the interval is entirely negative.
    pub fn clamp_nonnegative(&self) -> Option<Interval> {
        if self.hi.is_negative() {
            return None;
        }
        Some(Interval {
            lo: max_of(&self.lo, &Rational::zero()),
            hi: self.hi.clone(),
        })
    }

    /// `|x|` over the interval.
    pub fn abs(&self) -> Interval {
        if !self.lo.is_negative() {
            self.clone()
        } else if !self.hi.is_positive() {
            -self.clone()
        } else {
            Interval {
                lo: Rational::zero(),
                hi: max_of(&-self.lo.clone(), &self.hi),
            }
        }
    }

    /// Certified sign: `Some` only when every point of the interval agrees.
    pub fn sign(&self) -> Option<Ordering> {
        if self.lo.is_positive() {
            Some(Ordering::Greater)
        } else if self.hi.is_negative() {
            Some(Ordering::Less)
        } else if self.lo.is_zero() && self.hi.is_zero() {
            Some(Ordering::Equal)
        } else {
            None
        }
    }

    /// Endpoint-exact product: no outward rounding, even for wide operands.
    /// Keeps common scale factors cancellable in later ratios.
    pub fn mul_exact(&self, other: &Interval) -> Interval {
        let (lo, hi) = product_bounds(self, other);
        Interval { lo, hi }
    }

    pub fn scale_exact(&self, factor: &Rational) -> Interval {
        self.mul_exact(&Interval::point(factor.clone()))
    }

    pub fn checked_div(&self, other: &Interval) -> Result<Interval, IntervalError> {
        if other.contains_zero() {
            return Err(IntervalError::DivisionByZero);
        }
        let recip = Interval {
            lo: other.hi.recip(),
            hi: other.lo.recip(),
        };
        let (lo, hi) = product_bounds(self, &recip);
        Ok(finish(self, other, lo, hi))
    }

    pub fn recip(&self) -> Result<Interval, IntervalError> {
        Interval::point(Rational::one()).checked_div(self)
    }

    pub fn powi(&self, exp: i32) -> Interval {
        if exp < 0 {
            return self
                .recip()
                .expect("negative power of an interval containing zero")
                .powi(-exp);
        }
        let mut acc = Interval::point(Rational::one());
        for _ in 0..exp {
            acc = &acc * self;
        }
        acc
    }

    pub fn approx(&self) -> f64 {
        to_f64(&self.midpoint())
    }
}

fn product_bounds(a: &Interval, b: &Interval) -> (Rational, Rational) {
    if a.is_point() && b.is_point() {
        let p = &a.lo * &b.lo;
        return (p.clone(), p);
    }
    let cands = [&a.lo * &b.lo, &a.lo * &b.hi, &a.hi * &b.lo, &a.hi * &b.hi];
    let lo = cands.iter().min().cloned().unwrap();
    let hi = cands.iter().max().cloned().unwrap();
    (lo, hi)
}

fn finish(a: &Interval, b: &Interval, lo: Rational, hi: Rational) -> Interval {
    if a.is_point() && b.is_point() {
        Interval { lo, hi }
    } else {
        Interval::rounded(lo, hi)
    }
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_point() {
            write!(f, "[{}]", format_rational(&self.lo))
        } else {
            write!(
                f,
                "[{} ~{:.12e}, width ~{:.3e}]",
                format_rational(&self.lo),
                self.approx(),
                to_f64(&self.width())
            )
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_point() {
            write!(f, "{}", format_rational(&self.lo))
        } else {
            write!(f, "≈{:.12e} (±{:.1e})", self.approx(), to_f64(&self.width()) / 2.0)
        }
    }
}

impl From<Rational> for Interval {
    fn from(x: Rational) -> Self {
        Interval::point(x)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Add for &Interval {
    type Output = Interval;
    fn add(self, rhs: &Interval) -> Interval {
        finish(self, rhs, &self.lo + &rhs.lo, &self.hi + &rhs.hi)
    }
}

impl Sub for &Interval {
    type Output = Interval;
    fn sub(self, rhs: &Interval) -> Interval {
        finish(self, rhs, &self.lo - &rhs.hi, &self.hi - &rhs.lo)
    }
}

impl Mul for &Interval {
    type Output = Interval;
    fn mul(self, rhs: &Interval) -> Interval {
        let (lo, hi) = product_bounds(self, rhs);
        finish(self, rhs, lo, hi)
    }
}

impl Div for &Interval {
    type Output = Interval;
    fn div(self, rhs: &Interval) -> Interval {
        self.checked_div(rhs).expect("interval division by zero")
    }
}

macro_rules! forward_owned {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr for Interval {
            type Output = Interval;
            fn $m(self, rhs: Interval) -> Interval {
                (&self).$m(&rhs)
            }
        }
    )*};
}
forward_owned!(Add add, Sub sub, Mul mul, Div div);

impl Zero for Interval {
    fn zero() -> Self {
        Interval::point(Rational::zero())
    }
    fn is_zero(&self) -> bool {
        self.lo.is_zero() && self.hi.is_zero()
    }
}

impl One for Interval {
    fn one() -> Self {
        Interval::point(Rational::one())
    }
}

/// Points serialize as a single `"num/den"` string, proper intervals as
/// `["lo", "hi"]`.
impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.is_point() {
            s.serialize_str(&format_rational(&self.lo))
        } else {
            [format_rational(&self.lo), format_rational(&self.hi)].serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Point(String),
            Pair([String; 2]),
        }
        let parse = |t: &str| parse_rational(t).map_err(serde::de::Error::custom);
        match Repr::deserialize(d)? {
            Repr::Point(t) => Ok(Interval::point(parse(&t)?)),
            Repr::Pair([lo, hi]) => {
                Interval::new(parse(&lo)?, parse(&hi)?).map_err(serde::de::Error::custom)
            }
        }
    }
}

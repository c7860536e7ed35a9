//! Exact rational helpers: parsing, `num/den` formatting, decimal rendering
//! and directed rounding to a fixed number of significant bits.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational number.
pub type Rational = num_rational::BigRational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse {input:?} as a rational: {reason}")]
pub struct ParseRationalError {
    pub input: String,
    pub reason: &'static str,
}

pub fn rat(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

/// `2^exp` for any integer exponent.
pub fn pow2(exp: i64) -> Rational {
    let mag = BigInt::one() << exp.unsigned_abs();
    if exp >= 0 {
        Rational::from_integer(mag)
    } else {
        Rational::new_raw(BigInt::one(), mag)
    }
}

/// `x^exp` for any integer exponent; `x` must be nonzero when `exp < 0`.
pub fn powi(x: &Rational, exp: i64) -> Rational {
    let e = i32::try_from(exp).expect("exponent out of range");
    x.pow(e)
}

/// `10^-digits`, the usual way of writing a decimal tolerance.
pub fn ten_to_minus(digits: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::from(10u8).pow(digits))
}

/// Renders `x` as `num/den`, always with an explicit denominator.
pub fn format_rational(x: &Rational) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

/// Parses `num/den`, a plain integer, or a decimal such as `-1.25e-3`.
pub fn parse_rational(input: &str) -> Result<Rational, ParseRationalError> {
    let err = |reason| ParseRationalError {
        input: input.to_string(),
        reason,
    };
    let s = input.trim();
    if s.is_empty() {
        return Err(err("empty string"));
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err("bad numerator"))?;
        let d: BigInt = d.trim().parse().map_err(|_| err("bad denominator"))?;
        if d.is_zero() {
            return Err(err("zero denominator"));
        }
        return Ok(Rational::new(n, d));
    }
    parse_decimal(s).ok_or_else(|| err("not an integer, fraction or decimal"))
}

fn parse_decimal(s: &str) -> Option<Rational> {
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i64>().ok()?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all: BigInt = format!("{int_part}{frac_part}0").parse().ok()?;
    let all = all / BigInt::from(10u8);
    let scale = exp - frac_part.len() as i64;
    let ten = Rational::from_integer(BigInt::from(10u8));
    let mut value = Rational::from_integer(all) * powi(&ten, scale);
    if negative {
        value = -value;
    }
    Some(value)
}

/// Decimal rendering with `sig` significant digits (scientific notation,
/// round-half-up on the magnitude). Used for human-readable output only.
pub fn to_decimal(x: &Rational, sig: u32) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    let sig = sig.max(1);
    let negative = x.is_negative();
    let mag = x.abs();
    let mut exp10 = approx_log10(&mag);
    let ten = Rational::from_integer(BigInt::from(10u8));
    // scale so that 10^(sig-1) <= digits < 10^sig
    let digits = loop {
        let scaled = &mag * powi(&ten, i64::from(sig) - 1 - exp10);
        let rounded = (scaled + rat(1, 2)).floor().to_integer();
        let lower = BigInt::from(10u8).pow(sig - 1);
        let upper = BigInt::from(10u8).pow(sig);
        if rounded < lower {
            exp10 -= 1;
        } else if rounded >= upper {
            exp10 += 1;
        } else {
            break rounded;
        }
    };
    let text = digits.to_string();
    let (head, tail) = text.split_at(1);
    let tail = tail.trim_end_matches('0');
    let sign = if negative { "-" } else { "" };
    match (tail.is_empty(), exp10) {
        (true, 0) => format!("{sign}{head}"),
        (false, 0) => format!("{sign}{head}.{tail}"),
        (true, e) => format!("{sign}{head}e{e}"),
        (false, e) => format!("{sign}{head}.{tail}e{e}"),
    }
}

fn approx_log10(mag: &Rational) -> i64 {
    let bits = mag.numer().bits() as i64 - mag.denom().bits() as i64;
    (bits as f64 * std::f64::consts::LOG10_2).floor() as i64
}

pub fn to_f64(x: &Rational) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    // shift into f64 range before converting
    let shift = x.numer().bits() as i64 - x.denom().bits() as i64;
    let scaled = x * pow2(52 - shift);
    let mantissa = scaled.round().to_integer().to_f64().unwrap_or(f64::NAN);
    mantissa * 2f64.powi((shift - 52) as i32)
}

pub fn from_f64(value: f64) -> Option<Rational> {
    Rational::from_float(value)
}

/// Position of the leading bit: `2^e <= |x| < 2^(e+1)`.
pub fn floor_log2(x: &Rational) -> i64 {
    assert!(!x.is_zero(), "floor_log2 of zero");
    let mag = x.abs();
    let mut e = mag.numer().bits() as i64 - mag.denom().bits() as i64;
    if pow2(e) > mag {
        e -= 1;
    }
    e
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Down,
    Up,
}

/// Rounds `x` to a dyadic number with at most `bits` significant bits,
/// towards -inf (`Down`) or +inf (`Up`).
pub fn round_to_bits(x: &Rational, bits: u32, dir: Direction) -> Rational {
    if x.is_zero() || x.denom().is_one() && x.numer().bits() <= u64::from(bits) {
        return x.clone();
    }
    let e = floor_log2(x) - i64::from(bits) + 1;
    // x / 2^e has `bits` integer bits
    let (num, den) = if e >= 0 {
        (x.numer().clone(), x.denom() << e as u64)
    } else {
        (x.numer() << (-e) as u64, x.denom().clone())
    };
    let (q, r) = num.div_mod_floor(&den);
    let m = match (dir, r.is_zero()) {
        (_, true) | (Direction::Down, false) => q,
        (Direction::Up, false) => q + 1,
    };
    Rational::from_integer(m) * pow2(e)
}

/// Ordering-aware maximum for rationals (no `Ord::max` clone juggling at call sites).
pub fn max_of(a: &Rational, b: &Rational) -> Rational {
    match a.cmp(b) {
        Ordering::Less => b.clone(),
        _ => a.clone(),
    }
}

pub fn min_of(a: &Rational, b: &Rational) -> Rational {
    match a.cmp(b) {
        Ordering::Greater => b.clone(),
        _ => a.clone(),
    }
}

pub fn is_positive(x: &Rational) -> bool {
    x.numer().sign() == Sign::Plus
}

/// Wrapper that displays a rational in `num/den` form.
pub struct NumDen<'a>(pub &'a Rational);

impl fmt::Display for NumDen<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

/// Serde adapter: rationals as `"num/den"` strings.
pub mod serde_rational {
    use super::{format_rational, parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(xs: &[Rational], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(xs.len()))?;
            for x in xs {
                seq.serialize_element(&format_rational(x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
            let texts = Vec::<String>::deserialize(d)?;
            texts
                .iter()
                .map(|t| parse_rational(t).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

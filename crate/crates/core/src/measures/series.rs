//! Certified evaluation of nonnegative series `sum_i alpha_i q_i^l`.
//!
//! A series is certifiable when it carries tail metadata, i.e. implements
//! [`SplitMomentSeries`]: its index set splits into a subsequence on which the
//! `k`-th term is bounded by `k^-(2+n-l)` (and bounded below by `1/k` once
//! `l > n`), and a complement on which the terms from index `n-l+1` on are
//! bounded by `2^-i`. Everything else gets [`CertError::NoCertificate`].
//!
//! Tail bounds on the subsequence use convexity of `x^-s`:
//! `sum_{k>K} k^-s <= int_{K+1/2}^inf x^-s dx` and, when the terms are exactly
//! `k^-s`, `sum_{k>K} k^-s >= int_{K+1}^inf x^-s dx + (K+1)^-s / 2`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::interval::Interval;
use crate::rational::{floor_log2, format_rational, int, pow2, powi, rat, ten_to_minus, Rational};

use super::sequence::{SequenceError, SequenceSpec};

/// Fixed-point bits kept below the leading term when accumulating partial sums.
const GUARD_BITS: i64 = 128;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertConfig {
    /// Target width of every convergent enclosure.
    #[serde(with = "crate::rational::serde_rational")]
    pub width: Rational,
    /// Partial-sum level a divergence witness has to exceed.
    #[serde(with = "crate::rational::serde_rational")]
    pub threshold: Rational,
    /// Largest number of summed terms before giving up.
    pub max_terms: u64,
    /// Largest index gap scanned when searching the subsequence.
    pub scan_horizon: u64,
    /// Largest operator power accepted by domain queries.
    pub power_cap: u32,
}

impl Default for CertConfig {
    fn default() -> Self {
        CertConfig {
            width: ten_to_minus(10),
            threshold: int(10),
            max_terms: 4_000_000,
            scan_horizon: 1_000_000,
            power_cap: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CertError {
    #[error("no certificate: {0}")]
    NoCertificate(String),
    #[error("term budget exceeded: {needed}, at most {max} terms allowed")]
    BudgetExceeded { needed: String, max: u64 },
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error("term {index} is infinite")]
    InfiniteTerm { index: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum Verdict {
    Convergent {
        enclosure: Interval,
        partial_sum: Interval,
        tail: Interval,
        terms_used: u64,
        #[serde(default)]
        complement_terms: u64,
        tail_bound_rule: String,
    },
    Divergent {
        minorant: String,
        #[serde(with = "crate::rational::serde_rational")]
        threshold: Rational,
        index: u64,
        #[serde(with = "crate::rational::serde_rational")]
        partial_sum_lower: Rational,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesCertificate {
    pub terms: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

impl SeriesCertificate {
    pub fn is_convergent(&self) -> bool {
        matches!(self.verdict, Verdict::Convergent { .. })
    }

    pub fn enclosure(&self) -> Option<&Interval> {
        match &self.verdict {
            Verdict::Convergent { enclosure, .. } => Some(enclosure),
            Verdict::Divergent { .. } => None,
        }
    }

    /// Structural self-consistency: the partial sum plus the tail lies in the
    /// enclosure, or the recorded divergence witness exceeds its threshold.
    pub fn is_well_formed(&self) -> bool {
        match &self.verdict {
            Verdict::Convergent {
                enclosure,
                partial_sum,
                tail,
                ..
            } => {
                enclosure.encloses(&(partial_sum + tail)) && !tail.lo().is_negative()
            }
            Verdict::Divergent {
                threshold,
                partial_sum_lower,
                ..
            } => partial_sum_lower > threshold,
        }
    }
}

/// Tail metadata for a series split into a subsequence and its complement.
pub trait SplitMomentSeries: Send + Sync {
    fn describe(&self) -> String;

    /// The exponent `n` up to which subsequence terms obey `k^-(2+n-l)`.
    fn target_power(&self) -> i64;

    /// Whether the subsequence term at exponent `l` equals `k^-(2+n-l)` exactly.
    fn is_exact_power(&self, l: i64) -> bool;

    /// Exact subsequence terms for `k = 1, 2, ...`.
    fn subsequence_terms(
        &self,
        l: i64,
    ) -> Box<dyn Iterator<Item = Result<Rational, CertError>> + '_>;

    /// Exact complement terms with index `<= upto`, in index order.
    fn complement_terms(&self, l: i64, upto: u64) -> Result<Vec<Rational>, CertError>;

    /// Whether the complement of the subsequence is nonempty.
    fn has_complement(&self) -> bool;
}

/// A series `scale * sum_i alpha_i q_i^l` together with whatever is known
/// about its tail.
pub enum MomentSeries<'a> {
    Split {
        series: &'a dyn SplitMomentSeries,
        scale: Interval,
    },
    /// Finitely many nonzero terms.
    Finite {
        q: Vec<Rational>,
        alpha: Vec<Rational>,
        scale: Interval,
    },
    /// Closed-form sequences without tail metadata.
    Untagged {
        q: SequenceSpec,
        alpha: SequenceSpec,
    },
}

/// Accumulates nonnegative rationals as a pair of fixed-point bounds with
/// `bits` fractional bits.
struct DyadicSum {
    bits: u64,
    lo: BigInt,
    hi: BigInt,
}

impl DyadicSum {
    fn new(bits: u64) -> Self {
        DyadicSum {
            bits,
            lo: BigInt::zero(),
            hi: BigInt::zero(),
        }
    }

    fn for_leading(term: &Rational) -> Self {
        let lead = if term.is_zero() { 0 } else { floor_log2(term) };
        DyadicSum::new((GUARD_BITS - lead.min(0)) as u64)
    }

    fn add(&mut self, term: &Rational) {
        let (q, r) = (term.numer() << self.bits).div_mod_floor(term.denom());
        if !r.is_zero() {
            self.hi += &q + 1;
        } else {
            self.hi += &q;
        }
        self.lo += q;
    }

    fn bounds(&self) -> Interval {
        let den = BigInt::one() << self.bits;
        Interval::new(
            Rational::new(self.lo.clone(), den.clone()),
            Rational::new(self.hi.clone(), den),
        )
        .expect("lower fixed-point bound exceeds upper")
    }
}

/// `int_{x}^inf t^-s dt = x^(1-s)/(s-1)`.
fn power_tail(x: &Rational, s: i64) -> Rational {
    powi(x, 1 - s) / int(s - 1)
}

fn tail_enclosure(k: u64, s: i64, exact: bool) -> (Rational, Rational) {
    let kk = int(k as i64);
    let hi = power_tail(&(&kk + rat(1, 2)), s);
    let lo = if exact {
        let next = kk + Rational::one();
        power_tail(&next, s) + powi(&next, -s) / int(2)
    } else {
        Rational::zero()
    };
    (lo, hi)
}

/// Smallest `K <= max` with tail width `<= target`, by bisection.
fn terms_for_width(s: i64, exact: bool, target: &Rational, max: u64) -> Result<u64, CertError> {
    let width = |k: u64| {
        let (lo, hi) = tail_enclosure(k, s, exact);
        hi - lo
    };
    if &width(max) > target {
        return Err(CertError::BudgetExceeded {
            needed: format!("more than {max} terms needed"),
            max,
        });
    }
    let (mut a, mut b) = (0u64, max);
    while b - a > 1 {
        let mid = a + (b - a) / 2;
        if &width(mid) <= target {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(b)
}

/// Smallest `b` with `2^-b <= target`.
fn bits_for(target: &Rational) -> u64 {
    let mut b = (-floor_log2(target)).max(0) as u64;
    while pow2(-(b as i64)) > *target {
        b += 1;
    }
    b
}

/// Certificate for `scale * sum_i alpha_i q_i^l`.
pub fn weighted_moment_series(
    series: &MomentSeries<'_>,
    l: i64,
    cfg: &CertConfig,
) -> Result<SeriesCertificate, CertError> {
    match series {
        MomentSeries::Untagged { q, alpha } => Err(CertError::NoCertificate(format!(
            "sum_i alpha_i q_i^{l} with q = {q}, alpha = {alpha} has no tail rule"
        ))),
        MomentSeries::Finite { q, alpha, scale } => finite_series(q, alpha, scale, l),
        MomentSeries::Split { series, scale } => {
            if l <= series.target_power() {
                convergent_split(*series, scale, l, cfg)
            } else {
                divergent_split(*series, scale, l, cfg)
            }
        }
    }
}

fn finite_series(
    q: &[Rational],
    alpha: &[Rational],
    scale: &Interval,
    l: i64,
) -> Result<SeriesCertificate, CertError> {
    let mut sum = Rational::zero();
    for (i, (qi, ai)) in q.iter().zip(alpha).enumerate() {
        if ai.is_zero() {
            continue;
        }
        if qi.is_zero() {
            if l < 0 {
                return Err(CertError::InfiniteTerm { index: i as u64 + 1 });
            }
            if l == 0 {
                sum += ai;
            }
            continue;
        }
        sum += ai * powi(qi, l);
    }
    let partial = scale * &Interval::point(sum);
    Ok(SeriesCertificate {
        terms: format!("sum of {} listed terms alpha_i q_i^{l}", q.len().min(alpha.len())),
        verdict: Verdict::Convergent {
            enclosure: partial.clone(),
            partial_sum: partial,
            tail: Interval::zero(),
            terms_used: q.len().min(alpha.len()) as u64,
            complement_terms: 0,
            tail_bound_rule: "finite sum, no tail".into(),
        },
    })
}

fn convergent_split(
    series: &dyn SplitMomentSeries,
    scale: &Interval,
    l: i64,
    cfg: &CertConfig,
) -> Result<SeriesCertificate, CertError> {
    let n = series.target_power();
    let s = 2 + n - l;
    let exact = series.is_exact_power(l);
    let scale_hi = scale.hi().clone().max(Rational::one());
    // each of the two tails gets a quarter of the budget, then retry tighter
    // if the scale's own width eats the rest
    let mut inner = &cfg.width / (int(4) * &scale_hi);
    for _ in 0..4 {
        let k_on = terms_for_width(s, exact, &inner, cfg.max_terms)?;
        let k_off = if series.has_complement() {
            bits_for(&inner).max((n - l).max(0) as u64)
        } else {
            0
        };

        let mut acc: Option<DyadicSum> = None;
        for (k, term) in series.subsequence_terms(l).take(k_on as usize).enumerate() {
            let term = term?;
            debug_assert!(k as u64 <= k_on);
            acc.get_or_insert_with(|| DyadicSum::for_leading(&term)).add(&term);
        }
        let on_partial = acc.map_or_else(Interval::zero, |a| a.bounds());
        let off_partial: Rational = series
            .complement_terms(l, k_off)?
            .into_iter()
            .fold(Rational::zero(), |a, t| a + t);

        let (tail_lo, tail_hi) = tail_enclosure(k_on, s, exact);
        let off_tail = if series.has_complement() {
            pow2(-(k_off as i64))
        } else {
            Rational::zero()
        };
        let tail = Interval::new(tail_lo, tail_hi + off_tail).expect("tail bounds out of order");
        let partial = &on_partial + &Interval::point(off_partial);
        let partial_scaled = scale * &partial;
        let tail_scaled = scale * &tail;
        let enclosure = &partial_scaled + &tail_scaled;
        if enclosure.width() <= cfg.width {
            let mut rule = format!(
                "subsequence terms <= k^-{s}{}; tail after {k_on} terms in [int_(K+1)^inf{}, int_(K+1/2)^inf] of x^-{s}",
                if exact { " (equality)" } else { "" },
                if exact { " + (K+1)^-s/2" } else { " * 0" },
            );
            if series.has_complement() {
                rule.push_str(&format!(
                    "; complement terms <= 2^-i from index {}, tail after {k_off} <= 2^-{k_off}",
                    (n - l + 1).max(1)
                ));
            }
            return Ok(SeriesCertificate {
                terms: series.describe() + &format!(", exponent {l}"),
                verdict: Verdict::Convergent {
                    enclosure,
                    partial_sum: partial_scaled,
                    tail: tail_scaled,
                    terms_used: k_on,
                    complement_terms: k_off,
                    tail_bound_rule: rule,
                },
            });
        }
        inner /= int(16);
    }
    Err(CertError::BudgetExceeded {
        needed: "the scale factor needs a narrower unscaled enclosure".into(),
        max: cfg.max_terms,
    })
}

fn minorant_text(l: i64, n: i64) -> String {
    format!("subsequence term k is q_(i_k)^{} / k^2 >= k^{} >= 1/k (harmonic)", l - n, l - n - 2)
}

fn divergent_split(
    series: &dyn SplitMomentSeries,
    scale: &Interval,
    l: i64,
    cfg: &CertConfig,
) -> Result<SeriesCertificate, CertError> {
    if !scale.lo().is_positive() {
        return Err(CertError::NoCertificate(
            "divergence needs a positive lower bound on the scale".into(),
        ));
    }
    let n = series.target_power();
    let mut acc: Option<DyadicSum> = None;
    let mut limit = BigInt::zero();
    for (k, term) in series.subsequence_terms(l).enumerate() {
        let k = k as u64 + 1;
        if k > cfg.max_terms {
            break;
        }
        let term = term?;
        let a = acc.get_or_insert_with(|| {
            let a = DyadicSum::for_leading(&term);
            // scale_lo * lo / 2^bits > T  <=>  lo > floor(T * 2^bits / scale_lo)
            limit = (&cfg.threshold * Rational::from_integer(BigInt::one() << a.bits)
                / scale.lo())
            .floor()
            .to_integer();
            a
        });
        a.add(&term);
        if a.lo > limit {
            let lower = scale.lo() * Rational::new(a.lo.clone(), BigInt::one() << a.bits);
            return Ok(SeriesCertificate {
                terms: series.describe() + &format!(", exponent {l}"),
                verdict: Verdict::Divergent {
                    minorant: minorant_text(l, n),
                    threshold: cfg.threshold.clone(),
                    index: k,
                    partial_sum_lower: lower,
                },
            });
        }
    }
    Err(CertError::BudgetExceeded {
        needed: format!("no partial sum reached {}", format_rational(&cfg.threshold)),
        max: cfg.max_terms,
    })
}

/// Independently re-derives a divergence witness: checks the minorant term by
/// term and recomputes the partial sum at the recorded index by direct
/// summation of downward-rounded terms.
pub fn recheck_divergence(
    series: &dyn SplitMomentSeries,
    scale: &Interval,
    l: i64,
    cert: &SeriesCertificate,
) -> Result<bool, CertError> {
    let Verdict::Divergent {
        threshold, index, ..
    } = &cert.verdict
    else {
        return Ok(false);
    };
    if l <= series.target_power() {
        return Ok(false);
    }
    let mut sum = Rational::zero();
    for (k, term) in series.subsequence_terms(l).take(*index as usize).enumerate() {
        let term = term?;
        if term < rat(1, k as i64 + 1) {
            return Ok(false);
        }
        sum += crate::rational::round_to_bits(&term, 96, crate::rational::Direction::Down);
    }
    Ok(scale.lo() * sum > *threshold)
}

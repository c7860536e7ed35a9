//! The coefficient sequence `alpha` of the generator.
//!
//! Indices split into the greedy subsequence `Omega = {i_1 < i_2 < ...}` with
//! `q_(i_k) >= k`, where `alpha_(i_k) = 1/(k^2 q_(i_k)^n)`, and its complement,
//! where `alpha_i = 2^-i / sum_(k=1..i) q_i^(n+1-k)`. Column `k` of that sum is
//! the exponent `l = n+1-k`, so every exponent `l <= n` is covered and
//! `alpha_i q_i^l <= 2^-i` as soon as `i >= n+1-l`.

use num_traits::{One, Zero};

use crate::measures::{CertError, OmegaEntry, SequenceError, SequenceSpec, SplitMomentSeries};
use crate::rational::{int, pow2, powi, Rational};

/// Greedy subsequence entries with index `<= upto`. The scan always looks one
/// entry further, so an unbounded-looking prefix of a bounded sequence is
/// still rejected once the horizon is exhausted.
pub fn choose_subsequence(
    q: &SequenceSpec,
    upto: u64,
    horizon: u64,
) -> Result<Vec<OmegaEntry>, SequenceError> {
    let mut out = Vec::new();
    for entry in q.greedy_subsequence(horizon) {
        let e = entry?;
        if e.index > upto {
            break;
        }
        out.push(e);
    }
    Ok(out)
}

/// `2^-i / sum_(k=1..i) q_i^(n+1-k)`, the sum in geometric closed form.
pub fn off_omega_alpha(i: u64, q_i: &Rational, n: u32) -> Rational {
    let i = i as i64;
    let den = if q_i.is_one() {
        int(i)
    } else {
        powi(q_i, i64::from(n) + 1 - i) * (powi(q_i, i) - Rational::one()) / (q_i - Rational::one())
    };
    pow2(-i) / den
}

/// `1 / (k^2 q_(i_k)^n)`.
pub fn on_omega_alpha(k: u64, q: &Rational, n: u32) -> Rational {
    let k = int(k as i64);
    (&k * &k * powi(q, i64::from(n))).recip()
}

/// `alpha_i` for indices off `omega`, `i <= upto`.
pub fn summable_alphas_off_omega(
    q: &SequenceSpec,
    omega: &[OmegaEntry],
    n: u32,
    upto: u64,
) -> Vec<(u64, Rational)> {
    let mut on = omega.iter().map(|e| e.index).peekable();
    let mut out = Vec::new();
    for i in 1..=upto {
        while on.peek().is_some_and(|&j| j < i) {
            on.next();
        }
        if on.peek() == Some(&i) {
            continue;
        }
        out.push((i, off_omega_alpha(i, &q.value(i), n)));
    }
    out
}

/// `alpha_(i_k)` for the given subsequence entries.
pub fn omega_alphas(omega: &[OmegaEntry], n: u32) -> Vec<(u64, Rational)> {
    omega
        .iter()
        .map(|e| (e.index, on_omega_alpha(e.k, &e.q, n)))
        .collect()
}

/// `alpha` with its split, as a certifiable series source.
#[derive(Clone, Debug)]
pub struct GeneratedAlpha {
    q: SequenceSpec,
    n: u32,
    horizon: u64,
    identity: bool,
}

impl GeneratedAlpha {
    pub fn new(q: SequenceSpec, n: u32, horizon: u64) -> Self {
        let identity = q.is_identity();
        GeneratedAlpha {
            q,
            n,
            horizon,
            identity,
        }
    }

    pub fn q(&self) -> &SequenceSpec {
        &self.q
    }

    pub fn power(&self) -> u32 {
        self.n
    }

    /// `(i, q_i, alpha_i)` for `i <= upto`.
    pub fn table(&self, upto: u64) -> Result<Vec<(u64, Rational, Rational)>, SequenceError> {
        let omega = choose_subsequence(&self.q, upto, self.horizon)?;
        let mut all: Vec<(u64, Rational)> = omega_alphas(&omega, self.n);
        all.extend(summable_alphas_off_omega(&self.q, &omega, self.n, upto));
        all.sort_by_key(|e| e.0);
        Ok(all
            .into_iter()
            .map(|(i, a)| (i, self.q.value(i), a))
            .collect())
    }

    /// Subsequence indices `<= upto`.
    pub fn omega(&self, upto: u64) -> Result<Vec<u64>, SequenceError> {
        Ok(choose_subsequence(&self.q, upto, self.horizon)?
            .into_iter()
            .map(|e| e.index)
            .collect())
    }
}

impl SplitMomentSeries for GeneratedAlpha {
    fn describe(&self) -> String {
        format!("sum_i alpha_i q_i^l, q = {}, n = {}", self.q, self.n)
    }

    fn target_power(&self) -> i64 {
        i64::from(self.n)
    }

    fn is_exact_power(&self, l: i64) -> bool {
        l == i64::from(self.n) || self.identity
    }

    fn subsequence_terms(
        &self,
        l: i64,
    ) -> Box<dyn Iterator<Item = Result<Rational, CertError>> + '_> {
        let shift = l - i64::from(self.n);
        Box::new(self.q.greedy_subsequence(self.horizon).map(move |e| {
            let e = e?;
            let k = int(e.k as i64);
            Ok(powi(&e.q, shift) / (&k * &k))
        }))
    }

    fn complement_terms(&self, l: i64, upto: u64) -> Result<Vec<Rational>, CertError> {
        if self.identity {
            return Ok(Vec::new());
        }
        let omega = choose_subsequence(&self.q, upto, self.horizon)?;
        Ok(summable_alphas_off_omega(&self.q, &omega, self.n, upto)
            .into_iter()
            .map(|(i, a)| a * powi(&self.q.value(i), l))
            .collect())
    }

    fn has_complement(&self) -> bool {
        !self.identity
    }
}

/// Outcome of scanning `q` for unboundedness.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Boundedness {
    /// The greedy subsequence reached `level` (so `q_index >= level`).
    UnboundedWitnessed { level: u64, index: u64 },
    /// The scan stalled: no `q_i >= needed` within the horizon.
    BoundedLooking { needed: u64, after: u64 },
}

/// Number of greedy steps that count as witnessing `sup q = inf`.
pub const GUARD_LEVEL: u64 = 64;

/// Scans `q` within `horizon`. Unbounded `q` gives an unbounded shift, which
/// is what the generator needs; bounded `q` would give a bounded one.
pub fn boundedness_guard(q: &SequenceSpec, horizon: u64) -> Boundedness {
    let mut last = 0;
    for entry in q.greedy_subsequence(horizon).take(GUARD_LEVEL as usize) {
        match entry {
            Ok(e) => last = e.index,
            Err(SequenceError::SupNotWitnessed { needed, after, .. }) => {
                return Boundedness::BoundedLooking { needed, after }
            }
            Err(_) => return Boundedness::BoundedLooking { needed: 1, after: 0 },
        }
    }
    Boundedness::UnboundedWitnessed {
        level: GUARD_LEVEL,
        index: last,
    }
}

/// `sum_i alpha_i` restricted to listed indices, for sanity checks.
pub fn listed_sum(table: &[(u64, Rational, Rational)]) -> Rational {
    table.iter().fold(Rational::zero(), |acc, e| acc + &e.2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    #[test]
    fn linear_subsequence_is_identity() {
        let e = choose_subsequence(&SequenceSpec::Linear, 5, 10).unwrap();
        assert_eq!(e.iter().map(|x| x.index).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn mixed_subsequence_is_greedy() {
        let e = choose_subsequence(&SequenceSpec::Mixed, 12, 100).unwrap();
        assert_eq!(e.iter().map(|x| x.index).collect::<Vec<_>>(), vec![1, 2, 4, 6, 8, 10, 12]);
    }

    #[test]
    fn bounded_sequence_is_rejected() {
        let q = SequenceSpec::Constant { value: int(1) };
        assert!(matches!(
            choose_subsequence(&q, 5, 1000),
            Err(SequenceError::SupNotWitnessed { needed: 2, .. })
        ));
    }

    #[test]
    fn omega_formula() {
        assert_eq!(on_omega_alpha(3, &int(3), 1), rat(1, 27));
        assert_eq!(on_omega_alpha(2, &int(2), 2), rat(1, 16));
        assert_eq!(on_omega_alpha(1, &int(1), 7), int(1));
    }

    #[test]
    fn off_omega_formula() {
        // q_i = 1/i, n = 1: a_(i,k) = (1/i)^(2-k)
        let i = 5u64;
        let q = rat(1, 5);
        let expected = pow2(-5) / (1..=5).fold(Rational::zero(), |a, k| a + powi(&q, 2 - k));
        assert_eq!(off_omega_alpha(i, &q, 1), expected);
        // all columns equal to one
        assert_eq!(off_omega_alpha(4, &int(1), 3), rat(1, 64));
        for (i, q, n) in [(7u64, rat(3, 2), 2u32), (9, rat(1, 9), 1), (3, int(5), 4)] {
            let direct = (1..=i as i64).fold(Rational::zero(), |a, k| a + powi(&q, i64::from(n) + 1 - k));
            assert_eq!(off_omega_alpha(i, &q, n), pow2(-(i as i64)) / direct);
        }
        let linear = choose_subsequence(&SequenceSpec::Linear, 9, 10).unwrap();
        assert!(summable_alphas_off_omega(&SequenceSpec::Linear, &linear, 1, 9).is_empty());
    }

    #[test]
    fn complement_terms_obey_dyadic_bound() {
        let a = GeneratedAlpha::new(SequenceSpec::Mixed, 2, 1000);
        for l in -3..=2i64 {
            let omega = a.omega(30).unwrap();
            let off: Vec<u64> = (1..=30).filter(|i| !omega.contains(i)).collect();
            let terms = a.complement_terms(l, 30).unwrap();
            assert_eq!(terms.len(), off.len());
            for (i, t) in off.iter().zip(&terms) {
                if *i as i64 >= 3 - l {
                    assert!(*t <= pow2(-(*i as i64)), "l={l} i={i}");
                }
            }
        }
    }

    #[test]
    fn subsequence_terms_obey_power_bounds() {
        let a = GeneratedAlpha::new(SequenceSpec::Mixed, 1, 1000);
        for l in -2..=3i64 {
            for (k, t) in a.subsequence_terms(l).take(200).enumerate() {
                let k = k as i64 + 1;
                let t = t.unwrap();
                if l <= 1 {
                    assert!(t <= powi(&int(k), l - 3));
                } else {
                    assert!(t >= rat(1, k));
                }
            }
        }
    }

    #[test]
    fn table_merges_both_parts() {
        let a = GeneratedAlpha::new(SequenceSpec::Mixed, 1, 1000);
        let t = a.table(6).unwrap();
        assert_eq!(t.iter().map(|e| e.0).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(t[0].2, int(1));
        assert_eq!(t[1].2, rat(1, 8));
        assert_eq!(t[3].2, rat(1, 36));
        assert!(listed_sum(&t) > int(1));
    }

    #[test]
    fn guard_verdicts() {
        assert!(matches!(
            boundedness_guard(&SequenceSpec::Linear, 100),
            Boundedness::UnboundedWitnessed { .. }
        ));
        assert!(matches!(
            boundedness_guard(&SequenceSpec::Mixed, 100),
            Boundedness::UnboundedWitnessed { index: 126, .. }
        ));
        assert!(matches!(
            boundedness_guard(&SequenceSpec::Constant { value: int(3) }, 100),
            Boundedness::BoundedLooking { needed: 4, .. }
        ));
    }

    #[test]
    fn exactness_flags() {
        assert!(GeneratedAlpha::new(SequenceSpec::Linear, 2, 10).is_exact_power(-4));
        let m = GeneratedAlpha::new(SequenceSpec::Mixed, 2, 10);
        assert!(m.is_exact_power(2));
        assert!(!m.is_exact_power(1));
    }
}

use num_traits::Zero;
use proptest::prelude::*;
use treeshift::interval::Interval;
use treeshift::measures::{weighted_moment_series, AtomicMeasure, CertConfig, MomentSeries, SequenceSpec};
use treeshift::rational::{format_rational, parse_rational, rat, Rational};

fn rational() -> impl Strategy<Value = Rational> {
    (-10_000i64..10_000, 1i64..500).prop_map(|(n, d)| rat(n, d))
}

fn positive() -> impl Strategy<Value = Rational> {
    (1i64..10_000, 1i64..500).prop_map(|(n, d)| rat(n, d))
}

/// An interval and a point inside it.
fn member() -> impl Strategy<Value = (Interval, Rational)> {
    (rational(), 0i64..1000, 0i64..=100).prop_map(|(lo, w, t)| {
        let hi = &lo + rat(w, 7);
        let x = &lo + (&hi - &lo) * rat(t, 100);
        (Interval::new(lo, hi).unwrap(), x)
    })
}

proptest! {
    #[test]
    fn arithmetic_encloses_members((a, x) in member(), (b, y) in member()) {
        prop_assert!((&a + &b).contains(&(&x + &y)));
        prop_assert!((&a - &b).contains(&(&x - &y)));
        prop_assert!((&a * &b).contains(&(&x * &y)));
        if b.lo() > &Rational::zero() {
            prop_assert!(a.checked_div(&b).unwrap().contains(&(&x / &y)));
        }
    }

    #[test]
    fn rounding_only_widens(lo in rational(), w in positive()) {
        let hi = &lo + &w;
        let r = Interval::rounded(lo.clone(), hi.clone());
        prop_assert!(r.lo() <= &lo && r.hi() >= &hi);
    }

    #[test]
    fn rational_text_round_trip(x in rational()) {
        prop_assert_eq!(parse_rational(&format_rational(&x)).unwrap(), x);
    }

    #[test]
    fn measure_json_round_trip(locs in proptest::collection::btree_set(0i64..50, 1..6), seed in 1i64..20) {
        let n = locs.len() as i64;
        let atoms: Vec<(Rational, Rational)> = locs
            .iter()
            .enumerate()
            .map(|(k, t)| (rat(*t, seed), rat(if k == 0 { seed + 1 } else { 1 }, n + seed)))
            .collect();
        let m = AtomicMeasure::new(atoms).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: AtomicMeasure<Rational> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn finite_series_enclose_exact_sum(
        q in proptest::collection::vec(positive(), 1..6),
        l in -3i64..4,
    ) {
        let alpha: Vec<Rational> = q.iter().map(|_| rat(1, q.len() as i64)).collect();
        let exact = q
            .iter()
            .zip(&alpha)
            .fold(Rational::zero(), |s, (t, a)| s + a * treeshift::rational::powi(t, l));
        let series = MomentSeries::Finite { q, alpha, scale: Interval::point(rat(3, 2)) };
        let cert = weighted_moment_series(&series, l, &CertConfig::default()).unwrap();
        prop_assert!(cert.is_well_formed());
        let enc = cert.enclosure().unwrap();
        prop_assert!(enc.contains(&(exact * rat(3, 2))));
    }
}

#[test]
fn greedy_subsequence_is_minimal() {
    for q in [SequenceSpec::Linear, SequenceSpec::Mixed] {
        let mut prev = 0;
        for e in q.greedy_subsequence(10_000).take(40) {
            let e = e.unwrap();
            assert!(e.q >= rat(e.k as i64, 1));
            for skipped in prev + 1..e.index {
                assert!(q.value(skipped) < rat(e.k as i64, 1), "{q}: index {skipped}");
            }
            prev = e.index;
        }
    }
}

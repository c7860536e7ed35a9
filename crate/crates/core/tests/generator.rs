use num_traits::Zero;
use treeshift::construct::{
    construct, generate, verify_artifact, CounterexampleArtifact, CounterexampleRequest,
    VerifyOptions,
};
use treeshift::interval::Interval;
use treeshift::measures::{check_consistency_at, ChildData, SequenceSpec};
use treeshift::rational::{rat, to_f64, Rational};
use treeshift::tree::{Extent, VertexId, ORIGIN};
use treeshift::{FloatMeasure, Scalar};

#[test]
fn weights_follow_the_alpha_table() {
    let req = CounterexampleRequest::new(2, Extent::Infinite, SequenceSpec::Mixed);
    let b = construct(&req).unwrap();
    assert_eq!(b.omega[..6], [1, 2, 4, 6, 8, 10]);
    for (i, q, alpha) in b.table.iter().take(20) {
        let first = b.weights.get(VertexId::Branch(*i, 1)).unwrap();
        assert!(first.overlaps(&b.c.scale_exact(&(alpha * q))), "(i,1) at i={i}");
        for j in 2..=5 {
            assert_eq!(b.weights.get(VertexId::Branch(*i, j)).unwrap(), &Interval::point(q.clone()));
        }
    }
    // |lambda_(-l)|^2 = A_l / A_(l+1)
    for l in 0..req.trunk_weight_count() {
        let w = b.weights.get(VertexId::Trunk(l)).unwrap();
        let ratio = b.sums[l as usize].checked_div(&b.sums[l as usize + 1]).unwrap();
        assert!(w.overlaps(&ratio));
        assert!(w.lo() > &Rational::zero());
    }
}

#[test]
fn only_the_root_carries_slack() {
    let req = CounterexampleRequest::new(1, Extent::Finite(3), SequenceSpec::Linear);
    let b = construct(&req).unwrap();
    for (v, (_, eps)) in &b.measures {
        if *v == VertexId::Trunk(3) {
            assert!(eps.lo() >= &Rational::zero());
            assert!(eps.hi() < &rat(1, 1_000_000_000));
        } else {
            assert_eq!(eps, &Interval::point(Rational::zero()), "vertex {v}");
        }
    }
}

#[test]
fn artifact_survives_serialization_and_verifies() {
    let req = CounterexampleRequest::new(1, Extent::Finite(1), SequenceSpec::Linear);
    let a = generate(&req).unwrap();
    let text = a.to_json();
    let back = CounterexampleArtifact::from_json(&text).unwrap();
    assert_eq!(back.to_json(), text);
    let report = verify_artifact(&back, &VerifyOptions::default()).unwrap();
    assert!(report.passed, "{:?}", report.failures);

    let mut bad = back.clone();
    let v = VertexId::Branch(5, 2);
    let w = bad.weights.get(v).unwrap().scale_exact(&rat(1001, 1000));
    bad.weights.set(v, w);
    let report = verify_artifact(&bad, &VerifyOptions::default()).unwrap();
    assert!(!report.passed);
    assert!(report.failures.iter().any(|f| f.vertex == Some(VertexId::Branch(5, 1))));
}

#[test]
fn float_measures_are_consistent_to_rounding() {
    let req = CounterexampleRequest::new(1, Extent::Finite(0), SequenceSpec::Mixed);
    let b = construct(&req).unwrap();
    let to_float = |m: &treeshift::EnclosedMeasure| -> FloatMeasure { m.map(|p| to_f64(&p.midpoint())) };
    let (mu0, _) = &b.measures[&ORIGIN];
    let kids: Vec<(f64, FloatMeasure)> = (1..=b.window.max_branch)
        .map(|i| {
            let v = VertexId::Branch(i, 1);
            (b.weights.get(v).unwrap().approx(), to_float(&b.measures[&v].0))
        })
        .collect();
    let children: Vec<ChildData<'_, f64>> = kids
        .iter()
        .map(|(w, m)| ChildData {
            weight_sq: w,
            measure: m,
        })
        .collect();
    let r = check_consistency_at(&to_float(mu0), &0.0, &children).unwrap();
    assert!(r.sup < rat(1, 1_000_000_000_000), "{}", r.describe());
    assert!(!f64::EXACT && 0.5f64.is_certainly_positive());
}

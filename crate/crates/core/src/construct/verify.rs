//! Re-derivation of every identity the generated shift must satisfy, on the
//! stored weights and measures. Used both to certify fresh output and to
//! check an artifact read back from disk.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::interval::Interval;
use crate::measures::{
    check_consistency_at, recheck_divergence, ChildData, SplitMomentSeries,
};
use crate::rational::Rational;
use crate::shift::{
    branch_power_check, dense_defined_power, dense_defined_power_unreduced, DomainCertificate,
    DomainVerdict,
};
use crate::tree::{DirectedTreeSpec, Extent, TruncationWindow, VertexId, ORIGIN};
use crate::wco::{CompositionData, PFamily, ResidualBound, WcoReport};
use crate::{EnclosedMeasure, EnclosedWeights};

use super::alpha::GeneratedAlpha;
use super::artifact::{certainly_positive, CounterexampleArtifact, CounterexampleShift};
use super::{
    internal_config, normalize, scaled_sums, trunk_sums, ConstructError, CounterexampleRequest,
    MeasureSystem,
};

/// One failed check, tied to the vertex where it shows up when there is one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub check: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertex: Option<VertexId>,
    pub detail: String,
}

impl Failure {
    fn at(check: &str, vertex: VertexId, detail: impl Into<String>) -> Self {
        Failure {
            check: check.into(),
            vertex: Some(vertex),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.vertex {
            Some(v) => write!(f, "{} at vertex {}: {}", self.check, v, self.detail),
            None => write!(f, "{}: {}", self.check, self.detail),
        }
    }
}

/// An interval relation such as `c A_0 = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationCheck {
    pub relation: String,
    pub value: Interval,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrunkCheck {
    pub l: u64,
    #[serde(flatten)]
    pub check: RelationCheck,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionCheck {
    pub power: u32,
    /// Verdict from the branching vertices alone.
    pub reduced: bool,
    /// Verdict from every in-window vertex.
    pub unreduced: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificates {
    /// `sum_i |lambda_(i,1)|^2 int 1/s dmu_(i,1) = c A_0 = 1`.
    pub normalization: RelationCheck,
    /// `prod_(j<l) |lambda_(-j)|^2 * c A_l = 1` (`<= 1` at the root).
    pub trunk: Vec<TrunkCheck>,
    /// `q_i^m = prod_(j=2..m+1) |lambda_(i,j)|^2` for `m <= max_power`.
    pub branch_moments_max_power: u64,
    pub power_n: DomainCertificate,
    pub power_next: DomainCertificate,
    pub divergence_rechecked: bool,
    /// `branch_power_check(m)` for `1 <= m < n`.
    pub lower_powers: Vec<(u32, bool)>,
    pub reduction: Vec<ReductionCheck>,
    pub consistency_max: ResidualBound,
    pub consistency_residuals: Vec<(VertexId, ResidualBound)>,
    pub composition: WcoReport,
}

/// Borrowed data the checks run on.
pub struct CheckInput<'a> {
    pub request: &'a CounterexampleRequest,
    pub tree: &'a DirectedTreeSpec,
    /// Window the data was built for.
    pub window: TruncationWindow,
    /// Vertices whose identities are checked; inside `window`.
    pub checked: TruncationWindow,
    pub alpha: &'a GeneratedAlpha,
    pub c: &'a Interval,
    /// `A_l`, scaled.
    pub sums: &'a [Interval],
    pub weights: &'a EnclosedWeights,
    pub measures: &'a MeasureSystem,
}

fn relation(value: Interval, le_only: bool) -> RelationCheck {
    let one = Rational::one();
    let holds = if le_only {
        value.lo() <= &one
    } else {
        value.contains(&one)
    };
    RelationCheck {
        relation: if le_only { "<= 1" } else { "= 1" }.into(),
        value,
        holds,
    }
}

/// Runs every check; returns the certificates and the failures at `tol`.
pub fn evaluate(
    input: &CheckInput<'_>,
    tol: &Rational,
) -> Result<(Certificates, Vec<Failure>), ConstructError> {
    let req = input.request;
    let cfg = &req.cert;
    let win = input.window;
    let rows = win.with_fringe();
    let checked = input.checked;
    let mut failures = Vec::new();

    for (v, w) in input.weights.iter() {
        if !certainly_positive(w) {
            failures.push(Failure::at("positive weights", v, format!("{w:?}")));
        }
    }

    // q_i^m against products of branch weights
    let max_power = u64::from(cfg.power_cap).min(checked.max_depth);
    for i in 1..=checked.max_branch {
        let q = Interval::point(input.alpha.q().value(i));
        let mut prod = Interval::one();
        for m in 1..=max_power {
            let v = VertexId::Branch(i, m + 1);
            let Some(w) = input.weights.get(v) else {
                failures.push(Failure::at("branch moments", v, "missing weight"));
                break;
            };
            prod = &prod * w;
            if prod != q.powi(m as i32) {
                failures.push(Failure::at(
                    "branch moments",
                    v,
                    format!("product of weights differs from q_{i}^{m}"),
                ));
                break;
            }
        }
    }

    let normalization = relation(input.c * &input.sums[0], false);
    if !normalization.holds {
        failures.push(Failure::at("normalization", ORIGIN, format!("{:?}", normalization.value)));
    }

    let count = req.trunk_weight_count();
    let mut trunk = Vec::new();
    let mut prefix = Interval::one();
    for l in 1..=count {
        let v = VertexId::Trunk(l - 1);
        let w = input.weights.weight(v)?;
        prefix = &prefix * w;
        let at_root = req.kappa == Extent::Finite(l);
        let check = relation(&(&prefix * input.c) * &input.sums[l as usize], at_root);
        if !check.holds {
            failures.push(Failure::at("trunk products", v, format!("{:?}", check.value)));
        }
        trunk.push(TrunkCheck { l, check });
    }

    let (consistency_residuals, consistency_max) =
        consistency(input, &checked, &rows, tol, &mut failures)?;

    // composition-operator view
    let shift = CounterexampleShift::new(
        input.alpha,
        input.c,
        &req.alpha_scale,
        input.weights,
        input.tree,
        win,
    );
    let inner = internal_config(cfg);
    let h0 = shift
        .origin_series(1, &inner)?
        .enclosure()
        .cloned()
        .ok_or_else(|| ConstructError::Malformed("h(0) has no enclosure".into()))?;
    let data = CompositionData::from_shift(input.tree, input.weights, win).with_h(ORIGIN, h0);
    let p: PFamily<Interval> = input
        .measures
        .iter()
        .map(|(v, (m, _))| (*v, m.clone()))
        .collect();
    let mut cc = data.cc_residual(&p, None)?;
    if checked != win {
        cc.per_vertex.retain(|(v, _)| input.tree.in_window(*v, &checked));
        cc.max_residual = ResidualBound {
            gap: Rational::zero(),
            sup: Rational::zero(),
        };
        cc.worst_vertex = None;
        for (v, r) in &cc.per_vertex {
            if r.sup > cc.max_residual.sup || r.gap > cc.max_residual.gap {
                cc.worst_vertex = Some(*v);
            }
            cc.max_residual.sup = cc.max_residual.sup.clone().max(r.sup.clone());
            cc.max_residual.gap = cc.max_residual.gap.clone().max(r.gap.clone());
        }
    }
    if !cc.max_residual.within(tol) {
        failures.push(Failure::at(
            "composition identity",
            cc.worst_vertex.unwrap_or(ORIGIN),
            format!("residual {}", cc.max_residual),
        ));
    }
    let h_positive = data.h_positive_on_support()?;
    if !h_positive {
        failures.push(Failure {
            check: "h positive".into(),
            vertex: None,
            detail: "h(phi(x)) not certainly positive on the support of the weights".into(),
        });
    }
    let mut rt = data.roundtrip_measures(&p, &rows)?;
    rt.residuals.retain(|(v, _)| input.tree.in_window(*v, &checked));
    for (v, r) in &rt.residuals {
        if !r.within(tol) {
            failures.push(Failure::at("round trip", *v, r.describe()));
        }
    }
    let composition = WcoReport::new(&cc, h_positive, &rt);

    // domains of powers
    let n = req.n;
    let power_n = branch_power_check(&shift, n, cfg)?;
    if !power_n.in_domain() {
        failures.push(Failure::at("power n", ORIGIN, "not in the domain"));
    }
    let power_next = branch_power_check(&shift, n + 1, cfg)?;
    let divergence_rechecked = match &power_next.verdict {
        DomainVerdict::NotInDomain { evidence } => {
            let scale = input.c.scale_exact(&req.alpha_scale);
            recheck_divergence(input.alpha as &dyn SplitMomentSeries, &scale, i64::from(n) + 1, evidence)?
        }
        DomainVerdict::InDomain { .. } => false,
    };
    if !divergence_rechecked {
        failures.push(Failure::at(
            "power n+1",
            ORIGIN,
            "no rechecked divergence witness",
        ));
    }
    let mut lower_powers = Vec::new();
    for m in 1..n {
        let ok = branch_power_check(&shift, m, cfg)?.in_domain();
        if !ok {
            failures.push(Failure::at("lower powers", ORIGIN, format!("power {m}")));
        }
        lower_powers.push((m, ok));
    }
    let mut reduction = Vec::new();
    for (power, expected) in [(n, true), (n + 1, false)] {
        let reduced = dense_defined_power(&shift, power, cfg)?;
        let full = dense_defined_power_unreduced(&shift, power, cfg)?;
        if reduced.densely_defined != full.densely_defined || reduced.densely_defined != expected {
            let culprit = full
                .certificates
                .iter()
                .find(|c| !c.in_domain())
                .map_or(ORIGIN, |c| c.vertex);
            failures.push(Failure::at(
                "dense definedness",
                culprit,
                format!(
                    "power {power}: branching vertices say {}, all vertices say {}",
                    reduced.densely_defined, full.densely_defined
                ),
            ));
        }
        reduction.push(ReductionCheck {
            power,
            reduced: reduced.densely_defined,
            unreduced: full.densely_defined,
        });
    }

    Ok((
        Certificates {
            normalization,
            trunk,
            branch_moments_max_power: max_power,
            power_n,
            power_next,
            divergence_rechecked,
            lower_powers,
            reduction,
            consistency_max,
            consistency_residuals,
            composition,
        },
        failures,
    ))
}

type ConsistencyTable = (Vec<(VertexId, ResidualBound)>, ResidualBound);

fn consistency(
    input: &CheckInput<'_>,
    win: &TruncationWindow,
    rows: &TruncationWindow,
    tol: &Rational,
    failures: &mut Vec<Failure>,
) -> Result<ConsistencyTable, ConstructError> {
    let mut table = Vec::new();
    let mut worst = ResidualBound {
        gap: Rational::zero(),
        sup: Rational::zero(),
    };
    for v in input.tree.vertices(win) {
        let Some((mu, eps)) = input.measures.get(&v) else {
            failures.push(Failure::at("consistency", v, "no measure"));
            continue;
        };
        let kids = input.tree.children(v, rows)?;
        if input.tree.child_count(v)? != Some(kids.len() as u64) && !mu.is_truncated() {
            failures.push(Failure::at("consistency", v, "children leave the stored rows"));
            continue;
        }
        let mut data: Vec<(Interval, &EnclosedMeasure)> = Vec::new();
        let mut missing = None;
        for k in &kids {
            match (input.weights.get(*k), input.measures.get(k)) {
                (Some(w), Some((m, _))) => data.push((w.clone(), m)),
                _ => missing = Some(*k),
            }
        }
        if let Some(k) = missing {
            failures.push(Failure::at("consistency", v, format!("child {k} has no data")));
            continue;
        }
        let children: Vec<ChildData<'_, Interval>> = data
            .iter()
            .map(|(w, m)| ChildData {
                weight_sq: w,
                measure: m,
            })
            .collect();
        match check_consistency_at(mu, eps, &children) {
            Ok(r) => {
                if !r.within(tol) {
                    failures.push(Failure::at("consistency", v, r.describe()));
                }
                let b = ResidualBound {
                    gap: r.gap.clone(),
                    sup: r.sup.clone(),
                };
                if b.sup > worst.sup {
                    worst.sup = b.sup.clone();
                }
                if b.gap > worst.gap {
                    worst.gap = b.gap.clone();
                }
                table.push((v, b));
            }
            Err(e) => failures.push(Failure::at("consistency", v, e.to_string())),
        }
    }
    Ok((table, worst))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Check a smaller window than the stored one.
    pub window: Option<TruncationWindow>,
    /// Residual tolerance; defaults to the requested enclosure width.
    pub tolerance: Option<Rational>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub window: TruncationWindow,
    #[serde(with = "crate::rational::serde_rational")]
    pub tolerance: Rational,
    pub failures: Vec<Failure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificates: Option<Certificates>,
}

/// Re-runs every check on a stored artifact. `Err` is reserved for requests
/// that cannot be evaluated at all; failed identities land in the report.
pub fn verify_artifact(
    a: &CounterexampleArtifact,
    opts: &VerifyOptions,
) -> Result<VerifyReport, ConstructError> {
    let req = &a.request;
    req.validate()?;
    let window = match opts.window {
        Some(w) if !w.within(&a.window) => {
            return Err(ConstructError::InvalidRequest(format!(
                "window {w:?} exceeds the stored window {:?}",
                a.window
            )))
        }
        Some(w) => w,
        None => a.window,
    };
    let tol = opts.tolerance.clone().unwrap_or_else(|| req.cert.width.clone());
    let mut failures = Vec::new();
    let tree = req.tree();
    if a.tree != tree || a.window != req.window() {
        failures.push(Failure {
            check: "tree".into(),
            vertex: None,
            detail: "stored tree or window does not match the request".into(),
        });
    }

    // alpha and the subsequence, recomputed from the request
    let alpha = req.alpha();
    let table = alpha.table(a.window.max_branch)?;
    let stored: BTreeMap<u64, _> = a.alpha.values.iter().map(|e| (e.index, e)).collect();
    for (i, q, al) in &table {
        let ok = stored
            .get(i)
            .is_some_and(|e| &e.q == q && e.alpha == al * &req.alpha_scale);
        if !ok {
            failures.push(Failure::at("alpha", VertexId::Branch(*i, 1), format!("alpha_{i}")));
        }
    }
    if a.omega.indices != alpha.omega(a.window.max_branch)? {
        failures.push(Failure {
            check: "subsequence".into(),
            vertex: None,
            detail: "stored indices differ from the greedy scan".into(),
        });
    }

    // trunk sums and c
    let count = req.trunk_weight_count();
    let certs = trunk_sums(&alpha, count, &req.cert)?;
    let sums = scaled_sums(&certs, &req.alpha_scale)?;
    for (l, (cert, s)) in certs.iter().zip(&sums).enumerate() {
        let ok = a
            .trunk_sums
            .get(l)
            .is_some_and(|t| &t.certificate == cert && &t.scaled == s && t.l == l as u64);
        if !ok {
            failures.push(Failure::at(
                "trunk sums",
                VertexId::Trunk(l as u64),
                format!("stored sum for l = {l} differs from the recomputed one"),
            ));
        }
    }
    let c = normalize(&sums[0])?;
    if a.c != c || a.weights.norm_scale() != &c {
        failures.push(Failure::at("normalization constant", ORIGIN, "stored c differs"));
    }

    // the stored table must cover the rows
    let rows = a.window.with_fringe();
    let expected: BTreeSet<VertexId> = tree
        .vertices(&rows)
        .into_iter()
        .filter(|v| !tree.is_root(*v) && !matches!(v, VertexId::Trunk(_)))
        .chain((0..count).map(VertexId::Trunk))
        .collect();
    let present: BTreeSet<VertexId> = a.weights.iter().map(|(v, _)| v).collect();
    for v in expected.difference(&present) {
        failures.push(Failure::at("weights", *v, "missing"));
    }

    let (measures, bad) = a.parse_measures();
    for (v, e) in bad {
        failures.push(Failure::at("measures", v, e));
    }
    if !failures.is_empty() {
        return Ok(VerifyReport {
            passed: false,
            window,
            tolerance: tol,
            failures,
            certificates: None,
        });
    }

    let input = CheckInput {
        request: req,
        tree: &tree,
        window: a.window,
        checked: window,
        alpha: &alpha,
        c: &a.c,
        sums: &sums,
        weights: &a.weights,
        measures: &measures,
    };
    let (certificates, more) = evaluate(&input, &tol)?;
    failures.extend(more);
    if window == a.window && tol == req.cert.width && certificates != a.certificates {
        failures.push(Failure {
            check: "stored certificates".into(),
            vertex: None,
            detail: "stored certificates differ from the recomputed ones".into(),
        });
    }
    Ok(VerifyReport {
        passed: failures.is_empty(),
        window,
        tolerance: tol,
        failures,
        certificates: Some(certificates),
    })
}

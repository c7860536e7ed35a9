//! Serialized generator output and the shift it describes.

use std::collections::BTreeMap;
use std::sync::Mutex;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::interval::Interval;
use crate::measures::{
    weighted_moment_series, CertConfig, MomentSeries, SeriesCertificate, Verdict,
};
use crate::rational::{powi, Rational};
use crate::shift::{
    BranchMomentSeries, DomainCertificate, DomainVerdict, PowerDomainOracle, ShiftError,
};
use crate::tree::{DirectedTreeSpec, TruncationWindow, VertexId, ORIGIN};
use crate::EnclosedWeights;

use super::alpha::GeneratedAlpha;
use super::verify::{evaluate, Certificates, CheckInput};
use super::{ConstructError, Construction, CounterexampleRequest, MeasureSystem};

pub const FORMAT: &str = "treeshift-counterexample/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmegaRecord {
    pub rule: String,
    /// Subsequence indices inside the window.
    pub indices: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphaEntry {
    pub index: u64,
    #[serde(with = "crate::rational::serde_rational")]
    pub q: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub alpha: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphaRecord {
    pub on_subsequence: String,
    pub off_subsequence: String,
    pub tail_rule: String,
    #[serde(with = "crate::rational::serde_rational")]
    pub scale: Rational,
    /// Scaled values inside the window.
    pub values: Vec<AlphaEntry>,
}

/// Certified `sum_i alpha_i q_i^-l` (unscaled) and `A_l` (scaled).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrunkSum {
    pub l: u64,
    pub scaled: Interval,
    pub certificate: SeriesCertificate,
}

/// A measure row as stored. Kept as raw JSON so that a damaged row can be
/// reported against its vertex instead of failing the whole document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureRecord {
    pub vertex: VertexId,
    pub measure: serde_json::Value,
    pub epsilon: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleArtifact {
    pub format: String,
    pub request: CounterexampleRequest,
    pub tree: DirectedTreeSpec,
    pub window: TruncationWindow,
    pub omega: OmegaRecord,
    pub alpha: AlphaRecord,
    pub c: Interval,
    pub trunk_sums: Vec<TrunkSum>,
    pub weights: EnclosedWeights,
    pub measures: Vec<MeasureRecord>,
    pub certificates: Certificates,
}

impl CounterexampleArtifact {
    /// Attaches certificates to a construction, failing if any check does.
    pub fn certify(b: Construction) -> Result<Self, ConstructError> {
        let input = CheckInput {
            request: &b.request,
            tree: &b.tree,
            window: b.window,
            checked: b.window,
            alpha: &b.alpha,
            c: &b.c,
            sums: &b.sums,
            weights: &b.weights,
            measures: &b.measures,
        };
        let (certificates, failures) = evaluate(&input, &b.request.cert.width)?;
        if let Some(f) = failures.first() {
            return Err(ConstructError::Malformed(format!(
                "generated data fails its own check: {f}"
            )));
        }
        Ok(CounterexampleArtifact {
            format: FORMAT.into(),
            request: b.request.clone(),
            tree: b.tree,
            window: b.window,
            omega: OmegaRecord {
                rule: "greedy: i_k is the smallest index after i_(k-1) with q_i >= k".into(),
                indices: b.omega.clone(),
            },
            alpha: AlphaRecord {
                on_subsequence: "alpha_(i_k) = 1/(k^2 q_(i_k)^n)".into(),
                off_subsequence: "alpha_i = 2^-i / sum_(k=1..i) q_i^(n+1-k)".into(),
                tail_rule: "column k (exponent n+1-k): sum over i >= k off the subsequence of alpha_i q_i^(n+1-k) <= 2^(1-k)".into(),
                scale: b.request.alpha_scale.clone(),
                values: b
                    .table
                    .iter()
                    .map(|(i, q, a)| AlphaEntry {
                        index: *i,
                        q: q.clone(),
                        alpha: a.clone(),
                    })
                    .collect(),
            },
            c: b.c.clone(),
            trunk_sums: b
                .sum_certificates
                .iter()
                .zip(&b.sums)
                .enumerate()
                .map(|(l, (cert, a))| TrunkSum {
                    l: l as u64,
                    scaled: a.clone(),
                    certificate: cert.clone(),
                })
                .collect(),
            weights: b.weights.clone(),
            measures: b
                .measures
                .iter()
                .map(|(v, (m, eps))| MeasureRecord {
                    vertex: *v,
                    measure: serde_json::to_value(m).unwrap_or_default(),
                    epsilon: eps.clone(),
                })
                .collect(),
            certificates,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ConstructError> {
        let a: CounterexampleArtifact =
            serde_json::from_str(text).map_err(|e| ConstructError::Malformed(e.to_string()))?;
        if a.format != FORMAT {
            return Err(ConstructError::Malformed(format!(
                "unknown format {:?}, expected {FORMAT:?}",
                a.format
            )));
        }
        Ok(a)
    }

    /// Stored measures, each parsed on its own.
    pub fn parse_measures(&self) -> (MeasureSystem, Vec<(VertexId, String)>) {
        let mut ok = MeasureSystem::new();
        let mut bad = Vec::new();
        for r in &self.measures {
            match serde_json::from_value(r.measure.clone()) {
                Ok(m) => {
                    ok.insert(r.vertex, (m, r.epsilon.clone()));
                }
                Err(e) => bad.push((r.vertex, e.to_string())),
            }
        }
        (ok, bad)
    }
}

/// The generated shift as a domain oracle: branch vertices by closed form,
/// trunk vertices by trunk products times a moment series at the origin.
pub struct CounterexampleShift<'a> {
    alpha: &'a GeneratedAlpha,
    scale: Interval,
    weights: &'a EnclosedWeights,
    tree: &'a DirectedTreeSpec,
    window: TruncationWindow,
    cache: Mutex<BTreeMap<(i64, String), SeriesCertificate>>,
}

impl<'a> CounterexampleShift<'a> {
    /// `c` and the alpha scale combine into the factor in front of the
    /// unscaled moment series.
    pub fn new(
        alpha: &'a GeneratedAlpha,
        c: &Interval,
        alpha_scale: &Rational,
        weights: &'a EnclosedWeights,
        tree: &'a DirectedTreeSpec,
        window: TruncationWindow,
    ) -> Self {
        CounterexampleShift {
            alpha,
            scale: c.scale_exact(alpha_scale),
            weights,
            tree,
            window,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    /// `||S^l e_0||^2 = scale * sum_i alpha_i q_i^l`, memoised.
    pub fn origin_series(&self, l: i64, cfg: &CertConfig) -> Result<SeriesCertificate, ShiftError> {
        let key = (l, crate::rational::format_rational(&cfg.width));
        if let Some(c) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(c.clone());
        }
        let cert = weighted_moment_series(&self.branch_series(), l, cfg)?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, cert.clone());
        Ok(cert)
    }
}

impl PowerDomainOracle for CounterexampleShift<'_> {
    fn branching_vertices(&self) -> Vec<VertexId> {
        self.tree.branching_vertices(&self.window)
    }

    fn all_vertices(&self) -> Vec<VertexId> {
        self.tree.vertices(&self.window)
    }

    /// `e_u` is in `D(S^n)` iff `||S^k e_u||` is finite for every `k <= n`.
    fn vertex_certificate(
        &self,
        u: VertexId,
        n: u32,
        cfg: &CertConfig,
    ) -> Result<DomainCertificate, ShiftError> {
        let in_domain = |norm_sq, evidence| DomainCertificate {
            vertex: u,
            power: n,
            verdict: DomainVerdict::InDomain { norm_sq, evidence },
        };
        match u {
            VertexId::Branch(i, _) => {
                // every edge below (i, 1) has weight q_i
                let q = self.alpha.q().value(i);
                Ok(in_domain(Interval::point(powi(&q, i64::from(n))), None))
            }
            VertexId::Trunk(l) => {
                let mut prefix = Interval::one();
                let mut norm = Interval::one();
                let mut evidence = None;
                for k in 1..=u64::from(n) {
                    if k <= l {
                        prefix = &prefix * self.weights.weight(VertexId::Trunk(l - k))?;
                        norm = prefix.clone();
                        continue;
                    }
                    let cert = self.origin_series((k - l) as i64, cfg)?;
                    match &cert.verdict {
                        Verdict::Convergent { enclosure, .. } => {
                            norm = &prefix * enclosure;
                            evidence = Some(cert);
                        }
                        Verdict::Divergent { .. } => {
                            return Ok(DomainCertificate {
                                vertex: u,
                                power: n,
                                verdict: DomainVerdict::NotInDomain { evidence: cert },
                            })
                        }
                    }
                }
                Ok(in_domain(norm, evidence))
            }
            other => Err(ShiftError::Tree(crate::tree::TreeError::UnknownVertex(other))),
        }
    }
}

impl BranchMomentSeries for CounterexampleShift<'_> {
    fn branch_vertex(&self) -> VertexId {
        ORIGIN
    }

    fn branch_series(&self) -> MomentSeries<'_> {
        MomentSeries::Split {
            series: self.alpha,
            scale: self.scale.clone(),
        }
    }
}

/// True when the interval certainly excludes zero from below.
pub(crate) fn certainly_positive(x: &Interval) -> bool {
    x.lo() > &Rational::zero()
}

//! Generator of weighted shifts on `T_(inf,kappa)` whose `n`-th power is
//! densely defined while the `(n+1)`-th is not.
//!
//! Pipeline: greedy subsequence of `q`, the coefficients `alpha`, the
//! normalisation `c = 1/sum alpha_i`, branch weights
//! `|lambda_(i,1)|^2 = c alpha_i q_i`, `|lambda_(i,j)|^2 = q_i` (`j >= 2`),
//! trunk weights from ratios of the sums `A_l = sum_i alpha_i q_i^-l`, then the
//! measures `mu_(i,j) = delta_(q_i)` and `mu_(-l)({q_i}) = alpha_i q_i^-l / A_l`.

pub mod alpha;
pub mod artifact;
pub mod verify;

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::interval::{Interval, IntervalError};
use crate::measures::{
    weighted_moment_series, AtomicMeasure, CertConfig, CertError, MeasureError, MomentSeries,
    SeriesCertificate, SequenceError, SequenceSpec,
};
use crate::rational::{int, powi, Rational};
use crate::shift::{ShiftError, WeightSystem};
use crate::tree::{DirectedTreeSpec, Extent, TreeError, TruncationWindow, VertexId};
use crate::wco::WcoError;
use crate::{EnclosedMeasure, EnclosedWeights};

pub use alpha::{
    boundedness_guard, choose_subsequence, omega_alphas, summable_alphas_off_omega, Boundedness,
    GeneratedAlpha,
};
pub use artifact::{CounterexampleArtifact, CounterexampleShift};
pub use verify::{verify_artifact, Failure, VerifyOptions, VerifyReport};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConstructError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Shift(#[from] ShiftError),
    #[error(transparent)]
    Wco(#[from] WcoError),
    #[error("measure at {vertex}: {source}")]
    Measure {
        vertex: VertexId,
        source: MeasureError,
    },
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error("mass balance at the root is negative: {0}")]
    NegativeSlack(String),
    #[error("malformed artifact: {0}")]
    Malformed(String),
}

impl ConstructError {
    /// Whether the failure is a missing certificate rather than bad input.
    pub fn is_no_certificate(&self) -> bool {
        matches!(
            self,
            ConstructError::Cert(CertError::NoCertificate(_) | CertError::BudgetExceeded { .. })
                | ConstructError::Shift(ShiftError::Cert(_))
        )
    }
}

/// Default window: 10 trunk vertices, 50 branches, depth 30.
pub const DEFAULT_WINDOW: TruncationWindow = TruncationWindow {
    max_trunk: 10,
    max_branch: 50,
    max_depth: 30,
};

fn one() -> Rational {
    Rational::one()
}

fn is_one(x: &Rational) -> bool {
    x.is_one()
}

fn default_q() -> SequenceSpec {
    SequenceSpec::Linear
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterexampleRequest {
    /// Target power: `S^n` densely defined, `S^(n+1)` not.
    pub n: u32,
    pub kappa: Extent,
    #[serde(default = "default_q")]
    pub q: SequenceSpec,
    #[serde(default)]
    pub cert: CertConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<TruncationWindow>,
    /// Positive factor applied to every `alpha_i`; it cancels from the shift.
    #[serde(
        default = "one",
        skip_serializing_if = "is_one",
        with = "crate::rational::serde_rational"
    )]
    pub alpha_scale: Rational,
}

impl CounterexampleRequest {
    pub fn new(n: u32, kappa: Extent, q: SequenceSpec) -> Self {
        CounterexampleRequest {
            n,
            kappa,
            q,
            cert: CertConfig::default(),
            window: None,
            alpha_scale: Rational::one(),
        }
    }

    pub fn tree(&self) -> DirectedTreeSpec {
        DirectedTreeSpec::Model {
            eta: Extent::Infinite,
            kappa: self.kappa,
        }
    }

    /// The requested window clamped to the tree.
    pub fn window(&self) -> TruncationWindow {
        self.window
            .unwrap_or(DEFAULT_WINDOW)
            .fit(Extent::Infinite, self.kappa)
    }

    pub fn validate(&self) -> Result<(), ConstructError> {
        if self.n == 0 {
            return Err(ConstructError::InvalidRequest("n must be at least 1".into()));
        }
        if self.n + 1 > self.cert.power_cap {
            return Err(ConstructError::InvalidRequest(format!(
                "n + 1 = {} exceeds the power cap {}",
                self.n + 1,
                self.cert.power_cap
            )));
        }
        if self.alpha_scale <= Rational::zero() {
            return Err(ConstructError::InvalidRequest("alpha_scale must be positive".into()));
        }
        if !self.cert.width.is_positive() || !self.cert.threshold.is_positive() {
            return Err(ConstructError::InvalidRequest(
                "width and threshold must be positive".into(),
            ));
        }
        self.q.validate()?;
        if !self.q.is_injective() {
            // a bounded q is the more basic defect, so report that first
            if let Boundedness::BoundedLooking { needed, after } =
                boundedness_guard(&self.q, self.cert.scan_horizon)
            {
                return Err(SequenceError::SupNotWitnessed {
                    needed,
                    after,
                    horizon: self.cert.scan_horizon,
                }
                .into());
            }
            return Err(ConstructError::InvalidRequest(format!(
                "q = {} repeats a value; atoms of mu_0 must be distinct",
                self.q
            )));
        }
        let w = self.window();
        TruncationWindow::new(w.max_trunk, w.max_branch, w.max_depth)?;
        Ok(())
    }

    pub fn alpha(&self) -> GeneratedAlpha {
        GeneratedAlpha::new(self.q.clone(), self.n, self.cert.scan_horizon)
    }

    /// Number of trunk weights `lambda_0, lambda_-1, ...` kept: all of them
    /// for finite `kappa` inside the window, else one past the window so the
    /// topmost in-window vertex keeps its weight.
    pub fn trunk_weight_count(&self) -> u64 {
        let w = self.window();
        match self.kappa {
            Extent::Finite(k) if k <= w.max_trunk => k,
            _ => w.max_trunk + 1,
        }
    }
}

/// Series enclosures are computed ten times tighter than the requested width
/// so that the identities built from several of them stay within it.
pub fn internal_config(cfg: &CertConfig) -> CertConfig {
    CertConfig {
        width: &cfg.width / int(10),
        ..cfg.clone()
    }
}

/// Certificates for `sum_i alpha_i q_i^-l`, `l = 0..=count`, unscaled.
pub fn trunk_sums(
    alpha: &GeneratedAlpha,
    count: u64,
    cfg: &CertConfig,
) -> Result<Vec<SeriesCertificate>, ConstructError> {
    let series = MomentSeries::Split {
        series: alpha,
        scale: Interval::one(),
    };
    let inner = internal_config(cfg);
    (0..=count as i64)
        .map(|l| Ok(weighted_moment_series(&series, -l, &inner)?))
        .collect()
}

/// `A_l` from the unscaled certificates and the `alpha` scale.
pub fn scaled_sums(
    certs: &[SeriesCertificate],
    scale: &Rational,
) -> Result<Vec<Interval>, ConstructError> {
    certs
        .iter()
        .map(|c| {
            c.enclosure()
                .map(|e| e.scale_exact(scale))
                .ok_or_else(|| ConstructError::Cert(CertError::NoCertificate(c.terms.clone())))
        })
        .collect()
}

/// `c = 1 / A_0`.
pub fn normalize(a0: &Interval) -> Result<Interval, ConstructError> {
    Ok(a0.recip()?)
}

/// `|lambda_(i,1)|^2 = c alpha_i q_i` and `|lambda_(i,j)|^2 = q_i` for
/// `2 <= j <= depth`.
pub fn branch_weights(
    table: &[(u64, Rational, Rational)],
    c: &Interval,
    depth: u64,
) -> Vec<(VertexId, Interval)> {
    let mut out = Vec::new();
    for (i, q, a) in table {
        out.push((VertexId::Branch(*i, 1), c * &Interval::point(a * q)));
        for j in 2..=depth {
            out.push((VertexId::Branch(*i, j), Interval::point(q.clone())));
        }
    }
    out
}

/// `|lambda_(-l)|^2 = A_l / A_(l+1)` for `l < count`.
pub fn trunk_weights(sums: &[Interval], count: u64) -> Result<Vec<(VertexId, Interval)>, ConstructError> {
    (0..count as usize)
        .map(|l| {
            let a = sums.get(l + 1).ok_or_else(|| {
                ConstructError::InvalidRequest(format!("missing trunk sum {}", l + 1))
            })?;
            Ok((VertexId::Trunk(l as u64), sums[l].checked_div(a)?))
        })
        .collect()
}

/// Measures and `epsilon` on the rows the checks need.
pub type MeasureSystem = BTreeMap<VertexId, (EnclosedMeasure, Interval)>;

/// Builds `mu_v` for every vertex of `rows` and the root slack.
pub fn build_measure_system(
    tree: &DirectedTreeSpec,
    rows: &TruncationWindow,
    table: &[(u64, Rational, Rational)],
    c: &Interval,
    sums: &[Interval],
    weights: &EnclosedWeights,
) -> Result<MeasureSystem, ConstructError> {
    let measure_err = |vertex| move |source| ConstructError::Measure { vertex, source };
    let mut out = MeasureSystem::new();
    for v in tree.vertices(rows) {
        let mu = match v {
            VertexId::Branch(i, _) => {
                let q = &table
                    .get(i as usize - 1)
                    .ok_or_else(|| ConstructError::InvalidRequest(format!("no q_{i}")))?
                    .1;
                AtomicMeasure::dirac(q.clone())
            }
            VertexId::Trunk(0) => AtomicMeasure::truncated(
                table
                    .iter()
                    .map(|(_, q, a)| (q.clone(), c * &Interval::point(a.clone())))
                    .collect(),
            )
            .map_err(measure_err(v))?,
            VertexId::Trunk(l) => {
                let al = sums.get(l as usize).ok_or_else(|| {
                    ConstructError::InvalidRequest(format!("missing trunk sum {l}"))
                })?;
                AtomicMeasure::truncated(
                    table
                        .iter()
                        .map(|(_, q, a)| (q.clone(), Interval::point(a * powi(q, -(l as i64))) / al.clone()))
                        .collect(),
                )
                .map_err(measure_err(v))?
            }
            VertexId::Label(_) => unreachable!("model trees have no labelled vertices"),
        };
        out.insert(v, (mu, Interval::zero()));
    }
    if let Some(root) = tree.root().filter(|r| out.contains_key(r)) {
        let slack = root_slack(root, c, sums, weights)?;
        if let Some(entry) = out.get_mut(&root) {
            entry.1 = slack;
        }
    }
    Ok(out)
}

/// `epsilon` at the root: one minus the mass the children push up.
fn root_slack(
    root: VertexId,
    c: &Interval,
    sums: &[Interval],
    weights: &EnclosedWeights,
) -> Result<Interval, ConstructError> {
    let pushed = match root {
        // sum_i |lambda_(i,1)|^2 / q_i = c A_0
        VertexId::Trunk(0) => c * &sums[0],
        // |lambda_(-k+1)|^2 int 1/t dmu_(-k+1) = |lambda|^2 A_k / A_(k-1)
        VertexId::Trunk(k) => {
            let w = weights.weight(VertexId::Trunk(k - 1))?;
            w * &(&sums[k as usize] / &sums[k as usize - 1])
        }
        other => return Err(TreeError::UnknownVertex(other).into()),
    };
    let slack = Interval::one() - pushed;
    slack
        .clamp_nonnegative()
        .ok_or_else(|| ConstructError::NegativeSlack(format!("{slack:?}")))
}

/// Everything `generate` computes before certificates are attached.
pub struct Construction {
    pub request: CounterexampleRequest,
    pub tree: DirectedTreeSpec,
    pub window: TruncationWindow,
    pub alpha: GeneratedAlpha,
    pub table: Vec<(u64, Rational, Rational)>,
    pub omega: Vec<u64>,
    pub sum_certificates: Vec<SeriesCertificate>,
    pub sums: Vec<Interval>,
    pub c: Interval,
    pub weights: EnclosedWeights,
    pub measures: MeasureSystem,
}

/// Runs the pipeline up to weights and measures.
pub fn construct(req: &CounterexampleRequest) -> Result<Construction, ConstructError> {
    req.validate()?;
    let tree = req.tree();
    let window = req.window();
    let alpha = req.alpha();
    let table = alpha.table(window.max_branch)?;
    let omega = alpha.omega(window.max_branch)?;
    let count = req.trunk_weight_count();
    let sum_certificates = trunk_sums(&alpha, count, &req.cert)?;
    let sums = scaled_sums(&sum_certificates, &req.alpha_scale)?;
    let c = normalize(&sums[0])?;
    let scaled: Vec<_> = table
        .iter()
        .map(|(i, q, a)| (*i, q.clone(), a * &req.alpha_scale))
        .collect();
    let rows = window.with_fringe();
    let mut entries = branch_weights(&scaled, &c, rows.max_depth);
    entries.extend(trunk_weights(&sums, count)?);
    let weights = WeightSystem::new(&tree, entries)?.with_norm_scale(c.clone());
    let measures = build_measure_system(&tree, &rows, &scaled, &c, &sums, &weights)?;
    Ok(Construction {
        request: req.clone(),
        tree,
        window,
        alpha,
        table: scaled,
        omega,
        sum_certificates,
        sums,
        c,
        weights,
        measures,
    })
}

/// Generates a certified artifact.
pub fn generate(req: &CounterexampleRequest) -> Result<CounterexampleArtifact, ConstructError> {
    let built = construct(req)?;
    CounterexampleArtifact::certify(built)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use crate::tree::ORIGIN;

    fn small(n: u32, kappa: Extent, q: SequenceSpec) -> CounterexampleRequest {
        let mut r = CounterexampleRequest::new(n, kappa, q);
        r.window = Some(TruncationWindow::new(3, 5, 4).unwrap());
        r
    }

    #[test]
    fn request_validation() {
        assert!(small(0, Extent::Finite(0), SequenceSpec::Linear).validate().is_err());
        let repeated = SequenceSpec::Table {
            prefix: vec![int(2), int(2)],
            tail: crate::measures::TableTail::Linear,
        };
        assert!(small(1, Extent::Finite(0), repeated).validate().is_err());
        let mut r = small(1, Extent::Finite(0), SequenceSpec::Linear);
        r.alpha_scale = rat(-1, 2);
        assert!(r.validate().is_err());
    }

    #[test]
    fn trunk_counts() {
        assert_eq!(small(1, Extent::Finite(0), SequenceSpec::Linear).trunk_weight_count(), 0);
        assert_eq!(small(1, Extent::Finite(2), SequenceSpec::Linear).trunk_weight_count(), 2);
        assert_eq!(small(1, Extent::Infinite, SequenceSpec::Linear).trunk_weight_count(), 4);
        assert_eq!(small(1, Extent::Finite(9), SequenceSpec::Linear).trunk_weight_count(), 4);
    }

    #[test]
    fn bounded_q_is_rejected() {
        let r = small(1, Extent::Finite(0), SequenceSpec::Constant { value: int(1) });
        assert!(matches!(construct(&r), Err(ConstructError::Sequence(_))));
    }

    #[test]
    fn linear_weights() {
        let b = construct(&small(1, Extent::Finite(2), SequenceSpec::Linear)).unwrap();
        // |lambda_(2,1)|^2 = c/4
        let w21 = b.weights.weight(VertexId::Branch(2, 1)).unwrap();
        let quarter = b.c.scale_exact(&rat(1, 4));
        assert!(w21.overlaps(&quarter));
        assert_eq!(b.weights.weight(VertexId::Branch(3, 5)).unwrap(), &Interval::point(int(3)));
        // mu_(3,4) = delta_3
        assert_eq!(b.measures[&VertexId::Branch(3, 4)].0, AtomicMeasure::dirac(int(3)));
        // root slack contains 0
        assert!(b.measures[&VertexId::Trunk(2)].1.contains(&Rational::zero()));
        assert!(b.measures[&ORIGIN].1.is_point());
    }

    #[test]
    fn scale_cancels_from_trunk_ratios() {
        let base = construct(&small(1, Extent::Infinite, SequenceSpec::Mixed)).unwrap();
        let mut r = small(1, Extent::Infinite, SequenceSpec::Mixed);
        r.alpha_scale = rat(7, 3);
        let scaled = construct(&r).unwrap();
        for l in 0..4 {
            let v = VertexId::Trunk(l);
            assert_eq!(base.weights.weight(v).unwrap(), scaled.weights.weight(v).unwrap());
        }
    }
}

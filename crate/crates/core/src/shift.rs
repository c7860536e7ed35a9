//! The weighted shift `S`: `(S f)(v) = lambda_v f(parent(v))`, `0` at the root.
//!
//! Weights are stored as squared moduli `|lambda_v|^2`; the phase never
//! matters for any identity checked here, so `lambda_v` is taken to be the
//! nonnegative square root.

use std::collections::BTreeMap;

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::interval::Interval;
use crate::measures::{weighted_moment_series, CertConfig, CertError, MomentSeries, SeriesCertificate, Verdict};
use crate::rational::Rational;
use crate::scalar::Scalar;
use crate::tree::{DirectedTreeSpec, TreeError, TruncationWindow, VertexId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ShiftError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error("no weight stored for vertex {0}")]
    MissingWeight(VertexId),
    #[error("weight of vertex {0} is negative")]
    NegativeWeight(VertexId),
    #[error("the root {0} carries no weight")]
    RootWeight(VertexId),
    #[error("power {power} exceeds the configured cap {cap}")]
    PowerCap { power: u32, cap: u32 },
    #[error("scalar value at {0} is not finite")]
    NotFinite(VertexId),
}

/// Squared weights `|lambda_v|^2` on the non-root vertices, plus the
/// normalization constant the weights were scaled by (exactly 1 unless the
/// system came from the generator).
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSystem<T> {
    squared: BTreeMap<VertexId, T>,
    norm_scale: Interval,
}

impl<T: Scalar> WeightSystem<T> {
    /// Validates entries against the tree. For explicit trees every non-root
    /// vertex needs a weight; model trees only store a window's worth.
    pub fn new(
        tree: &DirectedTreeSpec,
        entries: impl IntoIterator<Item = (VertexId, T)>,
    ) -> Result<Self, ShiftError> {
        let squared: BTreeMap<VertexId, T> = entries.into_iter().collect();
        for (v, w) in &squared {
            if !tree.contains(*v) {
                return Err(TreeError::UnknownVertex(*v).into());
            }
            if tree.is_root(*v) {
                return Err(ShiftError::RootWeight(*v));
            }
            if w.sign() == Some(std::cmp::Ordering::Less) {
                return Err(ShiftError::NegativeWeight(*v));
            }
        }
        if let DirectedTreeSpec::Explicit(t) = tree {
            if let Some(v) = t.vertices().find(|v| !tree.is_root(*v) && !squared.contains_key(v)) {
                return Err(ShiftError::MissingWeight(v));
            }
        }
        Ok(Self {
            squared,
            norm_scale: Interval::one(),
        })
    }

    pub fn with_norm_scale(mut self, c: Interval) -> Self {
        self.norm_scale = c;
        self
    }

    pub fn norm_scale(&self) -> &Interval {
        &self.norm_scale
    }

    pub fn get(&self, v: VertexId) -> Option<&T> {
        self.squared.get(&v)
    }

    pub fn weight(&self, v: VertexId) -> Result<&T, ShiftError> {
        self.squared.get(&v).ok_or(ShiftError::MissingWeight(v))
    }

    pub fn iter(&self) -> impl Iterator<Item = (VertexId, &T)> {
        self.squared.iter().map(|(v, w)| (*v, w))
    }

    pub fn len(&self) -> usize {
        self.squared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.squared.is_empty()
    }

    /// Replace one entry; used to build negative controls.
    pub fn set(&mut self, v: VertexId, w: T) {
        self.squared.insert(v, w);
    }
}

impl<T: Scalar> Serialize for WeightSystem<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            norm_scale: &'a Interval,
            squared: Vec<(VertexId, serde_json::Value)>,
        }
        Repr {
            norm_scale: &self.norm_scale,
            squared: self.squared.iter().map(|(v, w)| (*v, w.to_json())).collect(),
        }
        .serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for WeightSystem<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            #[serde(default = "Interval::one")]
            norm_scale: Interval,
            squared: Vec<(VertexId, serde_json::Value)>,
        }
        let r = Repr::deserialize(d)?;
        let mut squared = BTreeMap::new();
        for (v, w) in r.squared {
            let w = T::from_json(&w).map_err(serde::de::Error::custom)?;
            if squared.insert(v, w).is_some() {
                return Err(serde::de::Error::custom(format!("vertex {v} listed twice")));
            }
        }
        Ok(WeightSystem {
            squared,
            norm_scale: r.norm_scale,
        })
    }
}

/// One coordinate `coeff * sqrt(radicand)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry<T> {
    pub coeff: Complex<Rational>,
    pub radicand: T,
}

/// A finitely supported vector in `l^2(V)`. Coordinates are kept as
/// `coeff * sqrt(radicand)` so that applying square-root weights stays exact.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FinSuppVector<T> {
    entries: BTreeMap<VertexId, Entry<T>>,
}

impl<T: Scalar> FinSuppVector<T> {
    pub fn zero() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// The basis vector `e_u`.
    pub fn basis(u: VertexId) -> Self {
        let mut v = Self::zero();
        v.insert(u, Complex::new(Rational::one(), Rational::zero()), T::one());
        v
    }

    pub fn insert(&mut self, u: VertexId, coeff: Complex<Rational>, radicand: T) {
        if coeff.is_zero() || radicand.is_zero() {
            self.entries.remove(&u);
        } else {
            self.entries.insert(u, Entry { coeff, radicand });
        }
    }

    pub fn get(&self, u: VertexId) -> Option<&Entry<T>> {
        self.entries.get(&u)
    }

    pub fn support(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.entries.keys().copied()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// `sum |coeff|^2 * radicand`.
    pub fn norm_sq(&self) -> T {
        self.entries.values().fold(T::zero(), |acc, e| {
            acc + T::from_rational(&e.coeff.norm_sqr()) * e.radicand.clone()
        })
    }
}

/// `S f`, restricted to the window. Fails if some image coordinate would fall
/// outside the window or lacks a stored weight.
pub fn apply_lambda<T: Scalar>(
    tree: &DirectedTreeSpec,
    weights: &WeightSystem<T>,
    f: &FinSuppVector<T>,
    window: &TruncationWindow,
) -> Result<FinSuppVector<T>, ShiftError> {
    let mut out = FinSuppVector::zero();
    for (u, e) in &f.entries {
        for v in tree.children_complete(*u, window)? {
            let w = weights.weight(v)?;
            // every vertex has a single parent, so entries never collide
            out.insert(v, e.coeff.clone(), e.radicand.clone() * w.clone());
        }
    }
    Ok(out)
}

/// `||S^n e_u||^2` as a sum over length-`n` paths of products of squared
/// weights.
pub fn power_norm_sq<T: Scalar>(
    tree: &DirectedTreeSpec,
    weights: &WeightSystem<T>,
    u: VertexId,
    n: u32,
    window: &TruncationWindow,
) -> Result<T, ShiftError> {
    let mut total = T::zero();
    for (_, path) in tree.descendants_complete(u, n, window)? {
        let mut prod = T::one();
        for v in &path[1..] {
            prod = prod * weights.weight(*v)?.clone();
        }
        total = total + prod;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum DomainVerdict {
    InDomain {
        norm_sq: Interval,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        evidence: Option<SeriesCertificate>,
    },
    NotInDomain {
        evidence: SeriesCertificate,
    },
}

/// Whether `e_u` lies in the domain of `S^n`, with the backing evidence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainCertificate {
    pub vertex: VertexId,
    pub power: u32,
    #[serde(flatten)]
    pub verdict: DomainVerdict,
}

impl DomainCertificate {
    pub fn in_domain(&self) -> bool {
        matches!(self.verdict, DomainVerdict::InDomain { .. })
    }

    fn from_series(vertex: VertexId, power: u32, cert: SeriesCertificate) -> Self {
        let verdict = match &cert.verdict {
            Verdict::Convergent { enclosure, .. } => DomainVerdict::InDomain {
                norm_sq: enclosure.clone(),
                evidence: Some(cert.clone()),
            },
            Verdict::Divergent { .. } => DomainVerdict::NotInDomain { evidence: cert },
        };
        DomainCertificate {
            vertex,
            power,
            verdict,
        }
    }
}

/// Per-vertex certificates and the overall verdict for `S^n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainReport {
    pub power: u32,
    pub densely_defined: bool,
    /// Whether only branching vertices were examined.
    pub reduced: bool,
    pub certificates: Vec<DomainCertificate>,
}

/// A shift that can decide `e_u in D(S^n)` vertex by vertex.
pub trait PowerDomainOracle {
    /// Branching vertices (at least two children in the full tree).
    fn branching_vertices(&self) -> Vec<VertexId>;

    /// Every vertex the oracle can answer for.
    fn all_vertices(&self) -> Vec<VertexId>;

    fn vertex_certificate(
        &self,
        u: VertexId,
        n: u32,
        cfg: &CertConfig,
    ) -> Result<DomainCertificate, ShiftError>;
}

fn domain_report<O: PowerDomainOracle + ?Sized>(
    oracle: &O,
    vertices: Vec<VertexId>,
    n: u32,
    cfg: &CertConfig,
    reduced: bool,
) -> Result<DomainReport, ShiftError> {
    if n > cfg.power_cap {
        return Err(ShiftError::PowerCap {
            power: n,
            cap: cfg.power_cap,
        });
    }
    let certificates = vertices
        .into_iter()
        .map(|u| oracle.vertex_certificate(u, n, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DomainReport {
        power: n,
        densely_defined: certificates.iter().all(DomainCertificate::in_domain),
        reduced,
        certificates,
    })
}

/// Dense definedness of `S^n`, checking branching vertices only: `S^n` is
/// densely defined iff `e_u in D(S^n)` for every branching vertex `u`.
pub fn dense_defined_power<O: PowerDomainOracle + ?Sized>(
    oracle: &O,
    n: u32,
    cfg: &CertConfig,
) -> Result<DomainReport, ShiftError> {
    domain_report(oracle, oracle.branching_vertices(), n, cfg, true)
}

/// Same verdict computed from every vertex, for cross-checking the reduction.
pub fn dense_defined_power_unreduced<O: PowerDomainOracle + ?Sized>(
    oracle: &O,
    n: u32,
    cfg: &CertConfig,
) -> Result<DomainReport, ShiftError> {
    domain_report(oracle, oracle.all_vertices(), n, cfg, false)
}

/// A shift on a finite explicit tree: every power is bounded, so every
/// vertex is in every domain.
pub struct FiniteShift<'a, T> {
    pub tree: &'a DirectedTreeSpec,
    pub weights: &'a WeightSystem<T>,
}

impl<T: Scalar> PowerDomainOracle for FiniteShift<'_, T> {
    fn branching_vertices(&self) -> Vec<VertexId> {
        self.tree.branching_vertices(&unbounded())
    }

    fn all_vertices(&self) -> Vec<VertexId> {
        self.tree.vertices(&unbounded())
    }

    fn vertex_certificate(
        &self,
        u: VertexId,
        n: u32,
        _cfg: &CertConfig,
    ) -> Result<DomainCertificate, ShiftError> {
        let norm = power_norm_sq(self.tree, self.weights, u, n, &unbounded())?;
        Ok(DomainCertificate {
            vertex: u,
            power: n,
            verdict: DomainVerdict::InDomain {
                norm_sq: norm.to_interval().ok_or(ShiftError::NotFinite(u))?,
                evidence: None,
            },
        })
    }
}

/// Window placeholder for explicit trees, which ignore windows.
fn unbounded() -> TruncationWindow {
    TruncationWindow {
        max_trunk: u64::MAX,
        max_branch: u64::MAX,
        max_depth: u64::MAX,
    }
}

/// A shift whose branching vertex `u` has `||S^n e_u||^2` given by a
/// moment series `scale * sum_i alpha_i q_i^n`.
pub trait BranchMomentSeries {
    fn branch_vertex(&self) -> VertexId;

    fn branch_series(&self) -> MomentSeries<'_>;
}

/// Domain verdict for `S^n` at the branching vertex, from the certificate of
/// `sum_i |lambda_(i,1)|^2 int s^(n-1) dmu_i`.
pub fn branch_power_check<B: BranchMomentSeries + ?Sized>(
    src: &B,
    n: u32,
    cfg: &CertConfig,
) -> Result<DomainCertificate, ShiftError> {
    let u = src.branch_vertex();
    if n > cfg.power_cap {
        return Err(ShiftError::PowerCap {
            power: n,
            cap: cfg.power_cap,
        });
    }
    if n == 0 {
        return Ok(DomainCertificate {
            vertex: u,
            power: 0,
            verdict: DomainVerdict::InDomain {
                norm_sq: Interval::one(),
                evidence: None,
            },
        });
    }
    let cert = weighted_moment_series(&src.branch_series(), i64::from(n), cfg)?;
    Ok(DomainCertificate::from_series(u, n, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};
    use crate::tree::{Extent, ORIGIN};
    use VertexId::{Branch, Label};

    fn path(weights: &[Rational]) -> (DirectedTreeSpec, WeightSystem<Rational>) {
        let edges: Vec<_> = (0..weights.len() as i64).map(|k| (Label(k), Label(k + 1))).collect();
        let tree = DirectedTreeSpec::explicit(&edges).unwrap();
        let w = WeightSystem::new(
            &tree,
            weights.iter().enumerate().map(|(k, w)| (Label(k as i64 + 1), w.clone())),
        )
        .unwrap();
        (tree, w)
    }

    #[test]
    fn path_power_norm() {
        let (tree, w) = path(&[int(2), int(2), int(2)]);
        assert_eq!(power_norm_sq(&tree, &w, Label(0), 3, &unbounded()).unwrap(), int(8));
        assert_eq!(power_norm_sq(&tree, &w, Label(0), 0, &unbounded()).unwrap(), int(1));
    }

    #[test]
    fn two_children_norm() {
        let tree = DirectedTreeSpec::explicit(&[(Label(0), Label(1)), (Label(0), Label(2))]).unwrap();
        let w = WeightSystem::new(&tree, [(Label(1), int(1)), (Label(2), int(4))]).unwrap();
        assert_eq!(power_norm_sq(&tree, &w, Label(0), 1, &unbounded()).unwrap(), int(5));
    }

    #[test]
    fn single_surviving_depth_two_path() {
        let tree = DirectedTreeSpec::explicit(&[
            (Label(0), Label(1)),
            (Label(0), Label(2)),
            (Label(1), Label(3)),
        ])
        .unwrap();
        let w = WeightSystem::new(&tree, [(Label(1), int(1)), (Label(2), int(4)), (Label(3), int(9))])
            .unwrap();
        assert_eq!(power_norm_sq(&tree, &w, Label(0), 2, &unbounded()).unwrap(), int(9));
    }

    #[test]
    fn apply_on_model_tree() {
        let tree = DirectedTreeSpec::model(Extent::Finite(2), Extent::Finite(0)).unwrap();
        let window = TruncationWindow::new(0, 2, 3).unwrap();
        let w = WeightSystem::new(&tree, [(Branch(1, 1), int(2)), (Branch(2, 1), int(3))]).unwrap();
        let img = apply_lambda(&tree, &w, &FinSuppVector::basis(ORIGIN), &window).unwrap();
        assert_eq!(img.support().collect::<Vec<_>>(), vec![Branch(1, 1), Branch(2, 1)]);
        assert_eq!(img.get(Branch(2, 1)).unwrap().radicand, int(3));
        assert_eq!(img.norm_sq(), int(5));
        let zero = apply_lambda(&tree, &w, &FinSuppVector::zero(), &window).unwrap();
        assert!(zero.is_zero());
    }

    #[test]
    fn apply_from_root_scales_by_weight() {
        let (tree, w) = path(&[int(9)]);
        let img = apply_lambda(&tree, &w, &FinSuppVector::basis(Label(0)), &unbounded()).unwrap();
        let e = img.get(Label(1)).unwrap();
        assert_eq!(e.radicand, int(9));
        assert_eq!(e.coeff, Complex::new(int(1), int(0)));
    }

    #[test]
    fn infinite_fan_overflows() {
        let tree = DirectedTreeSpec::model(Extent::Infinite, Extent::Finite(0)).unwrap();
        let window = TruncationWindow::new(0, 5, 3).unwrap();
        let w = WeightSystem::new(&tree, (1..=5).map(|i| (Branch(i, 1), int(1)))).unwrap();
        assert!(matches!(
            apply_lambda(&tree, &w, &FinSuppVector::basis(ORIGIN), &window),
            Err(ShiftError::Tree(TreeError::WindowOverflow(_)))
        ));
    }

    #[test]
    fn weight_validation() {
        let tree = DirectedTreeSpec::explicit(&[(Label(0), Label(1))]).unwrap();
        assert!(matches!(
            WeightSystem::new(&tree, [(Label(0), int(1)), (Label(1), int(1))]),
            Err(ShiftError::RootWeight(_))
        ));
        assert!(matches!(
            WeightSystem::<Rational>::new(&tree, []),
            Err(ShiftError::MissingWeight(_))
        ));
        assert!(matches!(
            WeightSystem::new(&tree, [(Label(1), rat(-1, 2))]),
            Err(ShiftError::NegativeWeight(_))
        ));
    }

    #[test]
    fn finite_trees_are_always_densely_defined() {
        let (tree, w) = path(&[int(2), rat(1, 3)]);
        let shift = FiniteShift { tree: &tree, weights: &w };
        let cfg = CertConfig::default();
        for n in 0..4 {
            let reduced = dense_defined_power(&shift, n, &cfg).unwrap();
            let full = dense_defined_power_unreduced(&shift, n, &cfg).unwrap();
            assert!(reduced.densely_defined && full.densely_defined);
            assert!(reduced.certificates.is_empty());
            assert_eq!(full.certificates.len(), 3);
        }
        assert!(matches!(
            dense_defined_power(&shift, 17, &cfg),
            Err(ShiftError::PowerCap { .. })
        ));
    }

    #[test]
    fn weights_json_round_trip() {
        let (_, w) = path(&[int(2), rat(1, 3)]);
        let text = serde_json::to_string(&w).unwrap();
        let back: WeightSystem<Rational> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, w);
    }
}

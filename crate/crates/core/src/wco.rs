//! The shift viewed as a weighted composition operator `f -> w * (f o phi)`
//! over the counting measure on the vertex set: `phi` is the parent map (the
//! root is fixed) and `w` is the weight (zero at the root).
//!
//! Everything here works with squared weights, so `w_sq(x) = |lambda_x|^2`.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::measures::{
    check_consistency_at, implied_epsilon, AtomicMeasure, ChildData, ConsistencyError, Residual,
};
use crate::rational::{format_rational, max_of, Rational};
use crate::scalar::{Discrepancy, Scalar};
use crate::shift::{ShiftError, WeightSystem};
use crate::tree::{DirectedTreeSpec, TreeError, TruncationWindow, VertexId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WcoError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Shift(#[from] ShiftError),
    #[error(transparent)]
    Consistency(#[from] ConsistencyError),
    #[error("no certified value of h at {0}: its children leave the window")]
    UncertifiedH(VertexId),
    #[error("cannot decide whether h({0}) is zero")]
    IndeterminateH(VertexId),
    #[error("no row for vertex {0}")]
    MissingRow(VertexId),
}

/// Rows `P(x, .)` of an atomic transition family.
pub type PFamily<T> = BTreeMap<VertexId, AtomicMeasure<T>>;

/// Counting-measure encoding of a weighted shift.
pub struct CompositionData<'a, T> {
    tree: &'a DirectedTreeSpec,
    weights: &'a WeightSystem<T>,
    window: TruncationWindow,
    h_known: BTreeMap<VertexId, T>,
}

impl<'a, T: Scalar> CompositionData<'a, T> {
    pub fn from_shift(
        tree: &'a DirectedTreeSpec,
        weights: &'a WeightSystem<T>,
        window: TruncationWindow,
    ) -> Self {
        CompositionData {
            tree,
            weights,
            window,
            h_known: BTreeMap::new(),
        }
    }

    /// Supplies `h(x)` where the children sum is infinite or leaves the
    /// window, e.g. a certified series enclosure.
    pub fn with_h(mut self, x: VertexId, h: T) -> Self {
        self.h_known.insert(x, h);
        self
    }

    pub fn window(&self) -> &TruncationWindow {
        &self.window
    }

    pub fn phi(&self, x: VertexId) -> Result<VertexId, WcoError> {
        Ok(self.tree.parent(x)?.unwrap_or(x))
    }

    /// `|w(x)|^2`: the squared shift weight, or 0 at the root.
    pub fn w_sq(&self, x: VertexId) -> Result<T, WcoError> {
        if self.tree.is_root(x) {
            return Ok(T::zero());
        }
        Ok(self.weights.weight(x)?.clone())
    }

    /// `phi^-1({x})` inside the window, with a flag telling whether that is
    /// the whole class.
    fn class(&self, x: VertexId) -> Result<(Vec<VertexId>, bool), WcoError> {
        let mut members = self.tree.children(x, &self.window)?;
        let complete = self.tree.child_count(x)? == Some(members.len() as u64);
        if self.tree.is_root(x) {
            members.insert(0, x);
        }
        Ok((members, complete))
    }

    /// `h(x) = sum over children of |lambda_y|^2`.
    pub fn h(&self, x: VertexId) -> Result<T, WcoError> {
        if let Some(h) = self.h_known.get(&x) {
            return Ok(h.clone());
        }
        let (members, complete) = self.class(x)?;
        if !complete {
            return Err(WcoError::UncertifiedH(x));
        }
        members.iter().try_fold(T::zero(), |acc, y| Ok(acc + self.w_sq(*y)?))
    }

    /// `Some(h(x))` if `x` is in `X_+` (h certainly positive), `None` if `h`
    /// is exactly zero.
    fn positive_h(&self, x: VertexId) -> Result<Option<T>, WcoError> {
        let h = self.h(x)?;
        if h.is_zero() {
            Ok(None)
        } else if h.is_certainly_positive() {
            Ok(Some(h))
        } else {
            Err(WcoError::IndeterminateH(x))
        }
    }

    /// `E(f)`: on each class `phi^-1({x})` with `x in X_+` the `|w|^2`-weighted
    /// average of `f`, and 0 elsewhere. `f` is read as 0 off its support.
    pub fn cond_expectation(
        &self,
        f: &BTreeMap<VertexId, T>,
    ) -> Result<BTreeMap<VertexId, T>, WcoError> {
        let mut out = BTreeMap::new();
        let mut done = BTreeSet::new();
        for z in self.tree.vertices(&self.window) {
            let x = self.phi(z)?;
            if !done.insert(x) {
                continue;
            }
            let (members, _) = self.class(x)?;
            let value = match self.positive_h(x)? {
                None => T::zero(),
                Some(h) => {
                    let mut num = T::zero();
                    for y in &members {
                        if let Some(fy) = f.get(y) {
                            num = num + fy.clone() * self.w_sq(*y)?;
                        }
                    }
                    num / h
                }
            };
            for y in members {
                if self.tree.in_window(y, &self.window) {
                    out.insert(y, value.clone());
                }
            }
        }
        Ok(out)
    }

    /// In-window vertices carrying `nu_w` mass: non-root with nonzero weight.
    fn weighted_vertices(&self) -> Result<Vec<VertexId>, WcoError> {
        let mut out = Vec::new();
        for x in self.tree.vertices(&self.window) {
            if !self.w_sq(x)?.is_zero() {
                out.push(x);
            }
        }
        Ok(out)
    }

    /// Whether `h(phi(x)) > 0` at every in-window `x` with nonzero weight.
    pub fn h_positive_on_support(&self) -> Result<bool, WcoError> {
        for x in self.weighted_vertices()? {
            if !self.h(self.phi(x)?)?.is_certainly_positive() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Residual of `E(P(., s))(x) = int_s t P(phi(x), dt) / h(phi(x))` over
    /// the finite algebra generated by the atoms, at every in-window `x` with
    /// nonzero weight whose parent row is available.
    ///
    /// `test_atoms` restricts the singleton cells; by default every atom of
    /// every involved row is a cell. When all involved rows are complete the
    /// complement of the cells is one more cell.
    pub fn cc_residual(
        &self,
        p: &PFamily<T>,
        test_atoms: Option<&[Rational]>,
    ) -> Result<CcReport, WcoError> {
        let mut per_vertex = Vec::new();
        let mut worst = Discrepancy::zero();
        let mut worst_vertex = None;
        let mut cache: BTreeMap<VertexId, Discrepancy> = BTreeMap::new();
        for x in self.weighted_vertices()? {
            let parent = self.phi(x)?;
            let Some(parent_row) = p.get(&parent) else {
                continue;
            };
            // the residual only depends on the class, which all siblings share
            let d = match cache.get(&parent) {
                Some(d) => d.clone(),
                None => {
                    let d = self.cc_at_class(parent, parent_row, p, test_atoms)?;
                    cache.insert(parent, d.clone());
                    d
                }
            };
            if d.sup > worst.sup || d.gap > worst.gap || worst_vertex.is_none() {
                worst_vertex = Some(x);
            }
            worst = worst.max(&d);
            per_vertex.push((x, d.into()));
        }
        Ok(CcReport {
            max_residual: worst.into(),
            worst_vertex,
            per_vertex,
        })
    }

    fn cc_at_class(
        &self,
        parent: VertexId,
        parent_row: &AtomicMeasure<T>,
        p: &PFamily<T>,
        test_atoms: Option<&[Rational]>,
    ) -> Result<Discrepancy, WcoError> {
        let h = self.h(parent)?;
        let (members, class_complete) = self.class(parent)?;
        let mut rows = Vec::new();
        for y in &members {
            let w = self.w_sq(*y)?;
            if w.is_zero() {
                continue;
            }
            rows.push((w, p.get(y).ok_or(WcoError::MissingRow(*y))?));
        }
        let cells: BTreeSet<Rational> = match test_atoms {
            Some(atoms) => atoms.iter().cloned().collect(),
            None => rows
                .iter()
                .flat_map(|(_, m)| m.locations().cloned())
                .chain(parent_row.locations().cloned())
                .collect(),
        };
        let complete = class_complete
            && !parent_row.is_truncated()
            && rows.iter().all(|(_, m)| !m.is_truncated());

        let lhs_of = |t: &Rational| {
            rows.iter()
                .fold(T::zero(), |acc, (w, m)| acc + m.mass_at(t) * w.clone())
                / h.clone()
        };
        let rhs_of = |t: &Rational| T::from_rational(t) * parent_row.mass_at(t) / h.clone();

        let mut gap = Rational::zero();
        let mut pos = Rational::zero();
        let mut neg = Rational::zero();
        let mut lhs_cells = T::zero();
        let mut rhs_cells = T::zero();
        let mut add_cell = |lhs: T, rhs: T, gap: &mut Rational| {
            let d = lhs.discrepancy(&rhs);
            *gap = max_of(gap, &d.gap);
            let (lo, hi) = signed_bounds(&lhs, &rhs, &d);
            if hi.is_positive() {
                pos += hi;
            }
            if lo.is_negative() {
                neg -= lo;
            }
        };
        for t in &cells {
            let (l, r) = (lhs_of(t), rhs_of(t));
            lhs_cells = lhs_cells + l.clone();
            rhs_cells = rhs_cells + r.clone();
            add_cell(l, r, &mut gap);
        }
        if complete {
            let lhs_all = rows
                .iter()
                .fold(T::zero(), |acc, (w, m)| acc + m.total_mass() * w.clone())
                / h.clone();
            let rhs_all = parent_row
                .atoms()
                .iter()
                .fold(T::zero(), |acc, (t, m)| acc + T::from_rational(t) * m.clone())
                / h.clone();
            add_cell(lhs_all - lhs_cells, rhs_all - rhs_cells, &mut gap);
        }
        Ok(Discrepancy {
            gap,
            sup: max_of(&pos, &neg),
        })
    }

    /// Measures `mu~_x = P(x, .)` for `x in X_+` and `delta_0` otherwise,
    /// checked against the consistency identity at every in-window vertex
    /// whose children are all available (or whose row is itself a
    /// truncation). The `epsilon` at each vertex is the implied mass at 0.
    ///
    /// `row_window` is the window the rows cover; it may reach one level
    /// deeper than the data window so that the outermost vertices can be
    /// checked too.
    pub fn roundtrip_measures(
        &self,
        p: &PFamily<T>,
        row_window: &TruncationWindow,
    ) -> Result<RoundTrip<T>, WcoError> {
        let mut measures = BTreeMap::new();
        for x in self.tree.vertices(row_window) {
            let row = match self.h(x) {
                Ok(h) if h.is_zero() => AtomicMeasure::dirac(Rational::zero()),
                Ok(h) if !h.is_certainly_positive() => return Err(WcoError::IndeterminateH(x)),
                // h > 0, or unknown because the row sits past the data window
                _ => match p.get(&x) {
                    Some(m) => m.clone(),
                    None => continue,
                },
            };
            measures.insert(x, row);
        }
        let mut residuals = Vec::new();
        let mut epsilon = BTreeMap::new();
        let mut unchecked = Vec::new();
        for x in self.tree.vertices(&self.window) {
            let Some(mu) = measures.get(&x) else {
                unchecked.push(x);
                continue;
            };
            let kids = self.tree.children(x, row_window)?;
            let complete = self.tree.child_count(x)? == Some(kids.len() as u64);
            let mut data = Vec::new();
            let mut missing = !complete && !mu.is_truncated();
            let mut weights = Vec::new();
            for v in &kids {
                weights.push(self.weights.weight(*v)?.clone());
            }
            for (v, w) in kids.iter().zip(&weights) {
                match measures.get(v) {
                    Some(m) => data.push(ChildData {
                        weight_sq: w,
                        measure: m,
                    }),
                    None => missing = true,
                }
            }
            if missing {
                unchecked.push(x);
                continue;
            }
            let eps = implied_epsilon(mu);
            let r = check_consistency_at(mu, &eps, &data)?;
            epsilon.insert(x, eps);
            residuals.push((x, r));
        }
        Ok(RoundTrip {
            measures,
            epsilon,
            residuals,
            unchecked,
        })
    }
}

/// Bounds on `lhs - rhs`.
fn signed_bounds<T: Scalar>(lhs: &T, rhs: &T, d: &Discrepancy) -> (Rational, Rational) {
    match (lhs.clone() - rhs.clone()).to_interval() {
        Some(iv) => (iv.lo().clone(), iv.hi().clone()),
        None => (-d.sup.clone(), d.sup.clone()),
    }
}

/// Bounds on a residual as `num/den` strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualBound {
    #[serde(with = "crate::rational::serde_rational")]
    pub gap: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub sup: Rational,
}

impl From<Discrepancy> for ResidualBound {
    fn from(d: Discrepancy) -> Self {
        ResidualBound {
            gap: d.gap,
            sup: d.sup,
        }
    }
}

impl ResidualBound {
    pub fn within(&self, tol: &Rational) -> bool {
        self.gap.is_zero() && &self.sup <= tol
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcReport {
    pub max_residual: ResidualBound,
    pub worst_vertex: Option<VertexId>,
    pub per_vertex: Vec<(VertexId, ResidualBound)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrip<T> {
    pub measures: BTreeMap<VertexId, AtomicMeasure<T>>,
    pub epsilon: BTreeMap<VertexId, T>,
    pub residuals: Vec<(VertexId, Residual)>,
    /// Vertices whose identity could not be evaluated inside the window.
    pub unchecked: Vec<VertexId>,
}

impl<T> RoundTrip<T> {
    pub fn max_residual(&self) -> Residual {
        let mut worst = Residual::zero();
        for (_, r) in &self.residuals {
            if r.sup > worst.sup || r.gap > worst.gap {
                worst = Residual {
                    gap: max_of(&worst.gap, &r.gap),
                    sup: max_of(&worst.sup, &r.sup),
                    atoms: Vec::new(),
                };
            }
        }
        worst
    }
}

/// Summary of the composition-operator checks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WcoReport {
    pub cc_max_residual: ResidualBound,
    pub h_positive_on_support: bool,
    pub consistency_residuals: Vec<(VertexId, ResidualBound)>,
}

impl WcoReport {
    pub fn new<T>(cc: &CcReport, h_positive: bool, rt: &RoundTrip<T>) -> Self {
        WcoReport {
            cc_max_residual: cc.max_residual.clone(),
            h_positive_on_support: h_positive,
            consistency_residuals: rt
                .residuals
                .iter()
                .map(|(v, r)| {
                    (
                        *v,
                        ResidualBound {
                            gap: r.gap.clone(),
                            sup: r.sup.clone(),
                        },
                    )
                })
                .collect(),
        }
    }
}

impl std::fmt::Display for ResidualBound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.gap.is_zero() {
            write!(f, "{}", format_rational(&self.sup))
        } else {
            write!(f, "{} (certainly nonzero)", format_rational(&self.sup))
        }
    }
}

/// Constant function 1 on the given vertices.
pub fn constant_one<T: Scalar>(vertices: impl IntoIterator<Item = VertexId>) -> BTreeMap<VertexId, T> {
    vertices.into_iter().map(|v| (v, T::one())).collect()
}

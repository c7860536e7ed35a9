//! Brute-force cross-checks on finite windows, written without the
//! evaluation code of [`crate::shift`] and [`crate::measures`] so that the two
//! can be compared against each other.
//!
//! Everything here is exact rational arithmetic.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};

use crate::measures::AtomicMeasure;
use crate::rational::Rational;
use crate::shift::WeightSystem;
use crate::tree::{DirectedTreeSpec, TreeError, TruncationWindow, VertexId};

/// Matrix of the shift restricted to a window. Row `v` holds the single
/// entry `lambda_v` in column `parent(v)`; it is stored squared.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedOperator {
    vertices: Vec<VertexId>,
    /// `(row, col, |lambda_row|^2)`
    entries: Vec<(usize, usize, Rational)>,
    /// Vertices with a child outside the window.
    leaky: Vec<bool>,
}

impl TruncatedOperator {
    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn entries(&self) -> &[(usize, usize, Rational)] {
        &self.entries
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.iter().filter(|e| !e.2.is_zero()).count()
    }

    fn index_of(&self, u: VertexId) -> Option<usize> {
        self.vertices.iter().position(|v| *v == u)
    }
}

/// Builds the window matrix. Edges leaving the window are dropped; missing
/// weights count as zero.
pub fn truncate(
    tree: &DirectedTreeSpec,
    weights: &WeightSystem<Rational>,
    window: &TruncationWindow,
) -> Result<TruncatedOperator, TreeError> {
    let vertices = tree.vertices(window);
    let index: BTreeMap<VertexId, usize> =
        vertices.iter().enumerate().map(|(k, v)| (*v, k)).collect();
    let mut entries = Vec::new();
    let mut inside_children = vec![0u64; vertices.len()];
    for (row, v) in vertices.iter().enumerate() {
        let Some(p) = tree.parent(*v)? else { continue };
        let Some(&col) = index.get(&p) else { continue };
        inside_children[col] += 1;
        let w = weights.get(*v).cloned().unwrap_or_else(Rational::zero);
        entries.push((row, col, w));
    }
    let mut leaky = Vec::with_capacity(vertices.len());
    for (k, v) in vertices.iter().enumerate() {
        leaky.push(tree.child_count(*v)? != Some(inside_children[k]));
    }
    Ok(TruncatedOperator {
        vertices,
        entries,
        leaky,
    })
}

/// `||M^n e_u||^2` by `n` sparse applications.
///
/// Every vertex is reached along one path only, so no two contributions ever
/// meet in the same coordinate and squared magnitudes can be pushed forward
/// directly.
pub fn matrix_power_norm(
    opr: &TruncatedOperator,
    u: VertexId,
    n: u32,
) -> Result<Rational, TreeError> {
    let start = opr.index_of(u).ok_or(TreeError::UnknownVertex(u))?;
    // None: not reached; Some(x): reached with squared magnitude x
    let mut state: Vec<Option<Rational>> = vec![None; opr.vertices.len()];
    state[start] = Some(Rational::from_integer(1.into()));
    for _ in 0..n {
        let mut next: Vec<Option<Rational>> = vec![None; opr.vertices.len()];
        for (k, s) in state.iter().enumerate() {
            if s.is_some() && opr.leaky[k] {
                return Err(TreeError::WindowOverflow(opr.vertices[k]));
            }
        }
        for (row, col, w) in &opr.entries {
            if let Some(x) = &state[*col] {
                next[*row] = Some(x * w);
            }
        }
        state = next;
    }
    let mut total = Rational::zero();
    for x in state.into_iter().flatten() {
        total += x;
    }
    Ok(total)
}

/// Residual of the consistency identity at one vertex; `None` when a child
/// with nonzero weight has an atom at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct BruteResidual {
    pub vertex: VertexId,
    pub value: Option<Rational>,
}

/// Mass of `{t}`, by linear scan.
fn point_mass(atoms: &[(Rational, Rational)], t: &Rational) -> Rational {
    let mut m = Rational::zero();
    for (s, p) in atoms {
        if s == t {
            m += p;
        }
    }
    m
}

/// Evaluates
/// `mu_u({t}) = sum_v |lambda_v|^2 mu_v({t}) / t` for `t > 0` and
/// `mu_u({0}) = eps_u` at each in-window vertex whose measure and children's
/// measures are all given, taking the supremum over every atom location.
///
/// A vertex with children outside the window is evaluated only when its own
/// measure is marked truncated.
pub fn brute_consistency(
    tree: &DirectedTreeSpec,
    weights: &WeightSystem<Rational>,
    measures: &BTreeMap<VertexId, AtomicMeasure<Rational>>,
    epsilon: &BTreeMap<VertexId, Rational>,
    window: &TruncationWindow,
) -> Result<Vec<BruteResidual>, TreeError> {
    let mut out = Vec::new();
    'vertex: for u in tree.vertices(window) {
        let Some(mu) = measures.get(&u) else { continue };
        let kids = tree.children(u, window)?;
        if tree.child_count(u)? != Some(kids.len() as u64) && !mu.is_truncated() {
            continue;
        }
        let mut children = Vec::new();
        for v in kids {
            let Some(m) = measures.get(&v) else { continue 'vertex };
            let w = weights.get(v).cloned().unwrap_or_else(Rational::zero);
            children.push((w, m.atoms()));
        }
        let mut points: Vec<Rational> = vec![Rational::zero()];
        points.extend(mu.atoms().iter().map(|a| a.0.clone()));
        for (_, atoms) in &children {
            points.extend(atoms.iter().map(|a| a.0.clone()));
        }
        let mut worst = Rational::zero();
        let mut infinite = false;
        for t in &points {
            let lhs = point_mass(mu.atoms(), t);
            let rhs = if t.is_zero() {
                let r = epsilon.get(&u).cloned().unwrap_or_else(Rational::zero);
                for (w, atoms) in &children {
                    if !w.is_zero() && !point_mass(atoms, t).is_zero() {
                        infinite = true;
                    }
                }
                r
            } else {
                let mut r = Rational::zero();
                for (w, atoms) in &children {
                    r += w * point_mass(atoms, t) / t;
                }
                r
            };
            let d = (lhs - rhs).abs();
            if d > worst {
                worst = d;
            }
        }
        out.push(BruteResidual {
            vertex: u,
            value: if infinite { None } else { Some(worst) },
        });
    }
    Ok(out)
}

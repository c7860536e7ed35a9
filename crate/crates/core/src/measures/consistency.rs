//! Atomwise evaluation of the consistency identity between a vertex measure
//! and its children's measures, and of the first-moment identity it implies.
//!
//! For a vertex `u` with children `v` the consistency identity reads
//!
//! ```text
//! mu_u(s) = sum_v |lambda_v|^2 * int_s (1/t) dmu_v(t) + eps_u * delta_0(s)
//! ```
//!
//! with `1/0 = inf`, `0 * inf = 0` and the empty sum equal to 0. For atomic
//! measures it suffices to compare both sides on every atom location.

use std::collections::BTreeSet;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::rational::{format_rational, Rational};
use crate::scalar::{Discrepancy, Scalar};

use super::atomic::AtomicMeasure;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsistencyError {
    #[error("child {child} has weight {weight} and an atom at 0, so the right side is infinite")]
    InfiniteTerm { child: usize, weight: String },
}

/// Weight and measure of one child.
#[derive(Clone, Copy, Debug)]
pub struct ChildData<'a, T> {
    pub weight_sq: &'a T,
    pub measure: &'a AtomicMeasure<T>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomResidual {
    #[serde(with = "crate::rational::serde_rational")]
    pub at: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub gap: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub sup: Rational,
}

/// Largest atomwise discrepancy plus the per-atom breakdown (only atoms with a
/// nonzero `sup` are listed).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Residual {
    #[serde(with = "crate::rational::serde_rational")]
    pub gap: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub sup: Rational,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<AtomResidual>,
}

impl Residual {
    pub fn zero() -> Self {
        Residual {
            gap: Rational::zero(),
            sup: Rational::zero(),
            atoms: Vec::new(),
        }
    }

    fn record(&mut self, at: &Rational, d: Discrepancy) {
        if d.sup.is_zero() {
            return;
        }
        let worst = Discrepancy {
            gap: self.gap.clone(),
            sup: self.sup.clone(),
        }
        .max(&d);
        self.gap = worst.gap;
        self.sup = worst.sup;
        self.atoms.push(AtomResidual {
            at: at.clone(),
            gap: d.gap,
            sup: d.sup,
        });
    }

    pub fn is_zero(&self) -> bool {
        self.sup.is_zero()
    }

    /// Both sides may agree, and differ by at most `tol`.
    pub fn within(&self, tol: &Rational) -> bool {
        self.gap.is_zero() && &self.sup <= tol
    }

    /// The certified lower bound and the upper bound as `num/den` strings.
    pub fn describe(&self) -> String {
        format!("gap {} sup {}", format_rational(&self.gap), format_rational(&self.sup))
    }
}

fn support<T: Scalar>(mu: &AtomicMeasure<T>, children: &[ChildData<'_, T>]) -> BTreeSet<Rational> {
    let mut atoms: BTreeSet<Rational> = mu.locations().cloned().collect();
    for c in children {
        atoms.extend(c.measure.locations().cloned());
    }
    atoms
}

/// Residual of the consistency identity at one vertex, over the union of all
/// atom locations and `0`.
pub fn check_consistency_at<T: Scalar>(
    mu_u: &AtomicMeasure<T>,
    eps_u: &T,
    children: &[ChildData<'_, T>],
) -> Result<Residual, ConsistencyError> {
    for (k, c) in children.iter().enumerate() {
        if !c.weight_sq.is_zero() && !c.measure.mass_at(&Rational::zero()).is_zero() {
            return Err(ConsistencyError::InfiniteTerm {
                child: k,
                weight: format!("{:?}", c.weight_sq),
            });
        }
    }
    let mut atoms = support(mu_u, children);
    atoms.insert(Rational::zero());
    let mut res = Residual::zero();
    for t in &atoms {
        let lhs = mu_u.mass_at(t);
        let rhs = if t.is_zero() {
            eps_u.clone()
        } else {
            let inv = T::from_rational(&t.recip());
            children.iter().fold(T::zero(), |acc, c| {
                let m = c.measure.mass_at(t);
                if m.is_zero() || c.weight_sq.is_zero() {
                    acc
                } else {
                    acc + c.weight_sq.clone() * inv.clone() * m
                }
            })
        };
        res.record(t, lhs.discrepancy(&rhs));
    }
    Ok(res)
}

/// Residual of `t * mu_x({t}) = sum_y |lambda_y|^2 mu_y({t})` over all atoms.
pub fn check_first_moment_identity<T: Scalar>(
    mu_x: &AtomicMeasure<T>,
    children: &[ChildData<'_, T>],
) -> Residual {
    let mut res = Residual::zero();
    for t in &support(mu_x, children) {
        let lhs = T::from_rational(t) * mu_x.mass_at(t);
        let rhs = children.iter().fold(T::zero(), |acc, c| {
            acc + c.weight_sq.clone() * c.measure.mass_at(t)
        });
        res.record(t, lhs.discrepancy(&rhs));
    }
    res
}

/// The `eps_u` that makes the identity hold at `t = 0`, namely `mu_u({0})`.
pub fn implied_epsilon<T: Scalar>(mu_u: &AtomicMeasure<T>) -> T {
    mu_u.mass_at(&Rational::zero())
}

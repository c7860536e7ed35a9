use std::cmp::Ordering;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::rational::{format_rational, parse_rational, powi, ten_to_minus, Rational};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MeasureError {
    #[error("atom at negative location {0}")]
    NegativeLocation(String),
    #[error("two atoms at location {0}")]
    DuplicateAtom(String),
    #[error("atom at {0} has non-positive mass")]
    NonPositiveMass(String),
    #[error("total mass is {0}, expected 1")]
    MassNotOne(String),
    #[error("malformed measure: {0}")]
    Malformed(String),
}

/// A finite sum of point masses on `[0, inf)`.
///
/// Atoms are kept sorted by location. A measure built with
/// [`AtomicMeasure::new`] is a probability measure; one built with
/// [`AtomicMeasure::truncated`] is a finite restriction of a measure with
/// infinitely many atoms and only satisfies `total <= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicMeasure<T> {
    atoms: Vec<(Rational, T)>,
    truncated: bool,
}

/// A value in `[0, inf]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Extended<T> {
    Finite(T),
    Infinite,
}

impl<T> Extended<T> {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<T> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }
}

/// Tolerance for the unit-mass check on inexact scalars.
pub fn mass_tolerance() -> Rational {
    ten_to_minus(9)
}

impl<T: Scalar> AtomicMeasure<T> {
    pub fn new(atoms: Vec<(Rational, T)>) -> Result<Self, MeasureError> {
        let m = Self::build(atoms, false)?;
        let total = m.total_mass();
        let tol = if T::EXACT { Rational::zero() } else { mass_tolerance() };
        if !total.discrepancy(&T::one()).within(&tol) {
            return Err(MeasureError::MassNotOne(format!("{total:?}")));
        }
        Ok(m)
    }

    /// Restriction of a measure with more atoms than can be listed.
    pub fn truncated(atoms: Vec<(Rational, T)>) -> Result<Self, MeasureError> {
        let m = Self::build(atoms, true)?;
        let total = m.total_mass();
        let over = total - T::one();
        if over.is_certainly_positive() && !over.discrepancy(&T::zero()).within(&mass_tolerance()) {
            return Err(MeasureError::MassNotOne(format!("{:?} > 1", m.total_mass())));
        }
        Ok(m)
    }

    fn build(mut atoms: Vec<(Rational, T)>, truncated: bool) -> Result<Self, MeasureError> {
        atoms.sort_by(|a, b| a.0.cmp(&b.0));
        for w in atoms.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(MeasureError::DuplicateAtom(format_rational(&w[0].0)));
            }
        }
        for (t, p) in &atoms {
            if t.is_negative() {
                return Err(MeasureError::NegativeLocation(format_rational(t)));
            }
            if !p.is_certainly_positive() {
                return Err(MeasureError::NonPositiveMass(format_rational(t)));
            }
        }
        Ok(Self { atoms, truncated })
    }

    pub fn dirac(t: Rational) -> Self {
        assert!(!t.is_negative(), "Dirac mass at a negative location");
        Self {
            atoms: vec![(t, T::one())],
            truncated: false,
        }
    }

    pub fn atoms(&self) -> &[(Rational, T)] {
        &self.atoms
    }

    pub fn locations(&self) -> impl Iterator<Item = &Rational> {
        self.atoms.iter().map(|(t, _)| t)
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn mass_at(&self, t: &Rational) -> T {
        match self.atoms.binary_search_by(|(s, _)| s.cmp(t)) {
            Ok(k) => self.atoms[k].1.clone(),
            Err(_) => T::zero(),
        }
    }

    pub fn total_mass(&self) -> T {
        self.atoms
            .iter()
            .fold(T::zero(), |acc, (_, p)| acc + p.clone())
    }

    /// `sum p * t^l`, with `0^0 = 1` and `0^l = inf` for `l < 0`.
    pub fn moment(&self, l: i32) -> Extended<T> {
        let mut acc = T::zero();
        for (t, p) in &self.atoms {
            if t.is_zero() {
                match l.cmp(&0) {
                    Ordering::Less => return Extended::Infinite,
                    Ordering::Equal => acc = acc + p.clone(),
                    Ordering::Greater => {}
                }
            } else {
                acc = acc + p.clone() * T::from_rational(&powi(t, l.into()));
            }
        }
        Extended::Finite(acc)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> AtomicMeasure<U> {
        AtomicMeasure {
            atoms: self.atoms.iter().map(|(t, p)| (t.clone(), f(p))).collect(),
            truncated: self.truncated,
        }
    }

    /// Replace one atom's mass or location; used to build negative controls.
    pub fn with_atom_replaced(&self, index: usize, t: Rational, p: T) -> Self {
        let mut atoms = self.atoms.clone();
        atoms[index] = (t, p);
        atoms.sort_by(|a, b| a.0.cmp(&b.0));
        Self {
            atoms,
            truncated: self.truncated,
        }
    }
}

impl AtomicMeasure<Rational> {
    pub fn is_probability(&self) -> bool {
        self.total_mass().is_one()
    }
}

impl<T: Scalar> Serialize for AtomicMeasure<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let atoms: Vec<(String, serde_json::Value)> = self
            .atoms
            .iter()
            .map(|(t, p)| (format_rational(t), p.to_json()))
            .collect();
        let mut obj = serde_json::Map::new();
        obj.insert("atoms".into(), serde_json::json!(atoms));
        if self.truncated {
            obj.insert("truncated".into(), true.into());
        }
        obj.serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for AtomicMeasure<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        struct Repr {
            atoms: Vec<(String, serde_json::Value)>,
            #[serde(default)]
            truncated: bool,
        }
        let r = Repr::deserialize(d)?;
        let mut atoms = Vec::with_capacity(r.atoms.len());
        for (t, p) in r.atoms {
            let t = parse_rational(&t).map_err(D::Error::custom)?;
            let p = T::from_json(&p).map_err(D::Error::custom)?;
            atoms.push((t, p));
        }
        if r.truncated {
            AtomicMeasure::truncated(atoms)
        } else {
            AtomicMeasure::new(atoms)
        }
        .map_err(D::Error::custom)
    }
}

//! Weighted shifts on directed trees: consistency systems of measures,
//! dense definedness of powers, and a certified generator of shifts whose
//! `n`-th power is densely defined while the next one is not.
//!
//! The numeric core is generic over [`Scalar`]: exact [`Rational`]s,
//! outward-rounded [`Interval`]s, or `f32`/`f64`. The aliases below name the
//! instantiations used throughout the crate.

pub mod construct;
pub mod interval;
pub mod measures;
pub mod oracle;
pub mod rational;
pub mod scalar;
pub mod shift;
pub mod tree;
pub mod wco;

pub use interval::Interval;
pub use rational::Rational;
pub use scalar::{Discrepancy, Scalar};

pub type ExactMeasure = measures::AtomicMeasure<Rational>;
pub type EnclosedMeasure = measures::AtomicMeasure<Interval>;
pub type FloatMeasure = measures::AtomicMeasure<f64>;
pub type ExactWeights = shift::WeightSystem<Rational>;
pub type EnclosedWeights = shift::WeightSystem<Interval>;

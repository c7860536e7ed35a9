//! Atomic measures on `[0, inf)`, closed-form sequences, the consistency
//! identity checker and certified series evaluation.

pub mod atomic;
pub mod consistency;
pub mod sequence;
pub mod series;

pub use atomic::{AtomicMeasure, Extended, MeasureError};
pub use consistency::{
    check_consistency_at, check_first_moment_identity, implied_epsilon, AtomResidual, ChildData,
    ConsistencyError, Residual,
};
pub use sequence::{GreedySubsequence, OmegaEntry, SequenceError, SequenceSpec, TableTail};
pub use series::{
    recheck_divergence, weighted_moment_series, CertConfig, CertError, MomentSeries,
    SeriesCertificate, SplitMomentSeries, Verdict,
};
